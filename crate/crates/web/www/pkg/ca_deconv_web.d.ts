/* tslint:disable */
/* eslint-disable */

export class Reconstruction {
    free(): void;
    [Symbol.dispose](): void;
    iteration(): number;
    loss(): number;
    constructor(scene: Scene, alpha_f: number, alpha_hi: number, seed: number);
    object(): Uint8Array;
    /**
     * Estimated pupil phase on open aperture pixels; closed pixels read 0.
     */
    phase(): Uint8Array;
    psf(): Uint8Array;
    psnr(): number;
    /**
     * Runs `n` iterations and returns the loss at the start of the last one.
     */
    step(n: number): number;
}

export class Scene {
    free(): void;
    [Symbol.dispose](): void;
    aperture(): Uint8Array;
    capture(): Uint8Array;
    /**
     * Registered, rescaled PSNR of the raw capture against the object.
     */
    capture_psnr(): number;
    /**
     * `snr_db` of `undefined` gives a noiseless capture. Noise is referenced
     * to the fully open aperture, as with a fixed exposure.
     */
    constructor(size: number, order: number, seed: number, transmittance: number, snr_db?: number | null);
    object(): Uint8Array;
    open_count(): number;
    phase(): Uint8Array;
    psf(): Uint8Array;
    size(): number;
}

/**
 * RGBA phase map followed by the RGBA PSF (log scale, centred) of a fully
 * open pupil with the given Noll coefficients.
 */
export function aberration_preview(size: number, coefficients: Float64Array): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_reconstruction_free: (a: number, b: number) => void;
    readonly __wbg_scene_free: (a: number, b: number) => void;
    readonly aberration_preview: (a: number, b: number, c: number) => [number, number, number, number];
    readonly reconstruction_iteration: (a: number) => number;
    readonly reconstruction_loss: (a: number) => number;
    readonly reconstruction_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly reconstruction_object: (a: number) => [number, number];
    readonly reconstruction_phase: (a: number) => [number, number];
    readonly reconstruction_psf: (a: number) => [number, number];
    readonly reconstruction_psnr: (a: number) => number;
    readonly reconstruction_step: (a: number, b: number) => [number, number, number];
    readonly scene_aperture: (a: number) => [number, number];
    readonly scene_capture: (a: number) => [number, number];
    readonly scene_capture_psnr: (a: number) => number;
    readonly scene_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly scene_object: (a: number) => [number, number];
    readonly scene_open_count: (a: number) => number;
    readonly scene_phase: (a: number) => [number, number];
    readonly scene_psf: (a: number) => [number, number];
    readonly scene_size: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
