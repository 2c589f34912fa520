/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_filterrun_free: (a: number, b: number) => void;
export const filter_run: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const filterrun_boundary_times: (a: number) => [number, number];
export const filterrun_estimates: (a: number) => [number, number];
export const filterrun_max_error: (a: number) => number;
export const filterrun_measured: (a: number) => [number, number];
export const filterrun_times: (a: number) => [number, number];
export const filterrun_truth: (a: number) => [number, number];
export const l2nw_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const target: (a: number) => number;
export const window_weights: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
