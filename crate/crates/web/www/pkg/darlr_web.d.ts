/* tslint:disable */
/* eslint-disable */

/**
 * Trains `full` and `r_static` on a small synthetic world and returns their
 * per-epoch reward error and trajectory return.
 */
export function compare_shaping(seed: number, epochs: number, trajectories: number): string;

/**
 * Per-item and state-level entropy penalty for comma-separated log counts.
 */
export function entropy_profile(counts: string, alpha: number): string;

/**
 * Composite reward for one shaped entry and its previous value.
 */
export function reward_breakdown(r_hat: number, previous: number, mean_sim: number, mean_div: number, p_e: number, lambda_u: number, lambda_e: number, eps: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly compare_shaping: (a: number, b: number, c: number) => [number, number];
    readonly entropy_profile: (a: number, b: number, c: number) => [number, number];
    readonly reward_breakdown: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
