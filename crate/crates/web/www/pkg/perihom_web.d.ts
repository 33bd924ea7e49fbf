/* tslint:disable */
/* eslint-disable */

/**
 * Pore-scale heat and two-species colloid run on an ε-periodic medium.
 */
export class Simulation {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Advances `steps` time steps and returns the last diagnostics as JSON.
     */
    advance(steps: number): string;
    /**
     * Field on the full grid, NaN in solid cells. 0 is θ, `k ≥ 1` is species `k`.
     */
    field(which: number): Float64Array;
    constructor(radius: number, epsilon: number, resolution: number, beta: number, tau: number, dt: number);
    side(): number;
    time(): number;
}

/**
 * Effective tensors of a cell with a centred disc, as JSON.
 */
export function cell_tensors(radius: number, resolution: number, kappa: number, d1: number, d2: number, g0: number): string;

/**
 * Well-mixed coagulation with the split used by the solvers, row-major
 * `(steps + 1) × n`.
 */
export function coagulation(preset: string, c: number, initial: Float64Array, dt: number, steps: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_simulation_free: (a: number, b: number) => void;
    readonly cell_tensors: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly coagulation: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly simulation_advance: (a: number, b: number) => [number, number, number, number];
    readonly simulation_field: (a: number, b: number) => [number, number, number, number];
    readonly simulation_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly simulation_side: (a: number) => number;
    readonly simulation_time: (a: number) => number;
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
