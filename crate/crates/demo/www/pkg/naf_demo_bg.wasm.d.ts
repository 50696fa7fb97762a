/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_moonsdemo_free: (a: number, b: number) => void;
export const moonsdemo_explain: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const moonsdemo_metrics: (a: number) => [number, number];
export const moonsdemo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const moonsdemo_points: (a: number) => [number, number];
export const moonsdemo_surface: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
