/* tslint:disable */
/* eslint-disable */

/**
 * Closed-loop MPPI on the exact surrogate model.
 */
export class Drive {
    free(): void;
    [Symbol.dispose](): void;
    constructor(straight: number, temperature: number, noise_std: number, seed: bigint);
    /**
     * One control interval. Returns
     * `[x, y, yaw, vx, cross-track error, reward, return, laps, done]`.
     */
    step(): Float64Array;
}

export class TrackView {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `[foot x, foot y, arc, signed cross-track error, target speed]` for a
     * point on the plane, with no search hint.
     */
    footpoint(x: number, y: number): Float64Array;
    length(): number;
    /**
     * Benchmark loop with straights of the given length, m.
     */
    constructor(straight: number);
    /**
     * Flattened `x, y, speed` per waypoint.
     */
    points(): Float64Array;
}

/**
 * Open-loop response to a held control input from an initial speed.
 * Returns rows of `t, vx, yaw rate, lateral accel, steer angle, roll, pitch`
 * every control interval.
 */
export function step_response(c_lat: number, c_long: number, speed: number, seconds: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_drive_free: (a: number, b: number) => void;
    readonly __wbg_trackview_free: (a: number, b: number) => void;
    readonly drive_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
    readonly drive_step: (a: number) => [number, number, number, number];
    readonly step_response: (a: number, b: number, c: number, d: number) => [number, number];
    readonly trackview_footpoint: (a: number, b: number, c: number) => [number, number];
    readonly trackview_length: (a: number) => number;
    readonly trackview_new: (a: number) => [number, number, number];
    readonly trackview_points: (a: number) => [number, number];
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
