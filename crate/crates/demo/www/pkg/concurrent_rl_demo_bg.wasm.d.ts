/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const contraction_certificate: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number];
export const pendulum_rollouts: (a: number, b: number) => [number, number];
export const pointmass_ramps: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
