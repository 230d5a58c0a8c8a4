/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_drive_free: (a: number, b: number) => void;
export const __wbg_trackview_free: (a: number, b: number) => void;
export const drive_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const drive_step: (a: number) => [number, number, number, number];
export const step_response: (a: number, b: number, c: number, d: number) => [number, number];
export const trackview_footpoint: (a: number, b: number, c: number) => [number, number];
export const trackview_length: (a: number) => number;
export const trackview_new: (a: number) => [number, number, number];
export const trackview_points: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
