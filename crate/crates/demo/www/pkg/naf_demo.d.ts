/* tslint:disable */
/* eslint-disable */

export class MoonsDemo {
    free(): void;
    [Symbol.dispose](): void;
    explain(x: number, y: number, top_k: number, trained: boolean): Float64Array;
    /**
     * ERT R², trained NAF R², untrained NAF R², trained and untrained
     * median reconstruction distance on 200 held-out points.
     */
    metrics(): Float64Array;
    /**
     * Fit an ERT on a fresh two-moons sample and train NAF-1 on it.
     */
    constructor(n_train: number, noise_sd: number, n_trees: number, epochs: number, seed: number);
    points(): Float64Array;
    surface(x0: number, x1: number, y0: number, y1: number, steps: number, trained: boolean): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_moonsdemo_free: (a: number, b: number) => void;
    readonly moonsdemo_explain: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly moonsdemo_metrics: (a: number) => [number, number];
    readonly moonsdemo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly moonsdemo_points: (a: number) => [number, number];
    readonly moonsdemo_surface: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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
