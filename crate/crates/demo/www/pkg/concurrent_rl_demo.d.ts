/* tslint:disable */
/* eslint-disable */

/**
 * Empirical contraction modulus of the concurrent Bellman operator on one
 * random MDP, against the bound `γ^ℓ`.
 */
export function contraction_certificate(n_states: number, n_actions: number, gamma: number, latency_fraction: number, trials: number, seed: bigint): string;

/**
 * Runs a hand-written swing-up controller on the pendulum in both execution
 * modes with the same latency.
 */
export function pendulum_rollouts(latency_ms: number, steps: number): string;

/**
 * Issues two pointmass displacement commands from `(0.2, 0.2)` and reports
 * where each one actually got to by the next capture.
 */
export function pointmass_ramps(latency_ms: number, concurrent: boolean, ax: number, ay: number, bx: number, by: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly contraction_certificate: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number];
    readonly pendulum_rollouts: (a: number, b: number) => [number, number];
    readonly pointmass_ramps: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
