/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_reconstruction_free: (a: number, b: number) => void;
export const __wbg_scene_free: (a: number, b: number) => void;
export const aberration_preview: (a: number, b: number, c: number) => [number, number, number, number];
export const reconstruction_iteration: (a: number) => number;
export const reconstruction_loss: (a: number) => number;
export const reconstruction_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const reconstruction_object: (a: number) => [number, number];
export const reconstruction_phase: (a: number) => [number, number];
export const reconstruction_psf: (a: number) => [number, number];
export const reconstruction_psnr: (a: number) => number;
export const reconstruction_step: (a: number, b: number) => [number, number, number];
export const scene_aperture: (a: number) => [number, number];
export const scene_capture: (a: number) => [number, number];
export const scene_capture_psnr: (a: number) => number;
export const scene_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const scene_object: (a: number) => [number, number];
export const scene_open_count: (a: number) => number;
export const scene_phase: (a: number) => [number, number];
export const scene_psf: (a: number) => [number, number];
export const scene_size: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
