/* tslint:disable */
/* eslint-disable */

/**
 * A filtered run on `ẍ = u + 0.2 sin(x)`, position component only.
 */
export class FilterRun {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Max boundary error of the estimates.
     */
    max_error(): number;
    readonly boundary_times: Float64Array;
    readonly estimates: Float64Array;
    readonly measured: Float64Array;
    readonly times: Float64Array;
    readonly truth: Float64Array;
}

/**
 * Simulates `windows` hold periods with `k` samples each and filters them.
 * `fixed_h <= 0` selects the curvature plug-in bandwidth.
 */
export function filter_run(k: number, windows: number, noise: number, fixed_h: number, seed: bigint): FilterRun;

/**
 * L2NW fit of `0.5 sin(2x)` from `n` evenly spaced samples on `[-1, 1]`,
 * evaluated at `queries`.
 */
export function l2nw_curve(n: number, h: number, lambda: number, queries: Float64Array): Float64Array;

/**
 * The function the L2NW demo learns.
 */
export function target(x: number): number;

/**
 * Weights `c_0..c_k` applied to the `k + 1` samples of a unit window.
 */
export function window_weights(k: number, order: number, h: number, right_side: boolean, kernel_name: string): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_filterrun_free: (a: number, b: number) => void;
    readonly filter_run: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly filterrun_boundary_times: (a: number) => [number, number];
    readonly filterrun_estimates: (a: number) => [number, number];
    readonly filterrun_max_error: (a: number) => number;
    readonly filterrun_measured: (a: number) => [number, number];
    readonly filterrun_times: (a: number) => [number, number];
    readonly filterrun_truth: (a: number) => [number, number];
    readonly l2nw_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly target: (a: number) => number;
    readonly window_weights: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
