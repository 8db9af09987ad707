/**
 * Feature backbones. The pretrained CNN/audio-net identifiers are reserved
 * for real weights; the shipped extractors are deterministic signal
 * statistics with the same output contracts (fixed dimension, finite values)
 * so the rest of the pipeline can be exercised and tested without weights.
 */

import { Frame } from './ppm.js';

export interface VisualBackbone {
  name: string;
  dim: number;
  embed(frame: Frame): Float32Array;
}

export interface AudioBackbone {
  name: string;
  dim: number;
  /** Pools one waveform window (mono, already resampled) to a vector. */
  embed(window: Float32Array, sampleRate: number): Float32Array;
}

export function visualBackbone(name: string): VisualBackbone {
  if (name === 'grid-stats') return gridStats();
  if (name === 'googlenet') {
    throw new Error(
      "visual backbone 'googlenet' requires pretrained weights, which are not bundled; use 'grid-stats'",
    );
  }
  throw new Error(`unknown visual backbone '${name}' (available: grid-stats, googlenet)`);
}

export function audioBackbone(name: string): AudioBackbone {
  if (name === 'band-energy') return bandEnergy();
  if (name === 'soundnet') {
    throw new Error(
      "audio backbone 'soundnet' requires pretrained weights, which are not bundled; use 'band-energy'",
    );
  }
  throw new Error(`unknown audio backbone '${name}' (available: band-energy, soundnet)`);
}

/**
 * 1024-d visual descriptor: the frame is divided into a 16x16 grid and each
 * cell contributes mean R, G, B and luma standard deviation.
 */
function gridStats(): VisualBackbone {
  const GRID = 16;
  return {
    name: 'grid-stats',
    dim: GRID * GRID * 4,
    embed(frame: Frame): Float32Array {
      const out = new Float32Array(GRID * GRID * 4);
      const { width, height, pixels } = frame;
      for (let gy = 0; gy < GRID; gy++) {
        for (let gx = 0; gx < GRID; gx++) {
          const x0 = Math.floor((gx * width) / GRID);
          const x1 = Math.max(x0 + 1, Math.floor(((gx + 1) * width) / GRID));
          const y0 = Math.floor((gy * height) / GRID);
          const y1 = Math.max(y0 + 1, Math.floor(((gy + 1) * height) / GRID));
          let r = 0, g = 0, b = 0, luma = 0, luma2 = 0;
          const n = (x1 - x0) * (y1 - y0);
          for (let y = y0; y < y1; y++) {
            for (let x = x0; x < x1; x++) {
              const p = (y * width + x) * 3;
              const pr = pixels[p] / 255;
              const pg = pixels[p + 1] / 255;
              const pb = pixels[p + 2] / 255;
              r += pr; g += pg; b += pb;
              const l = 0.299 * pr + 0.587 * pg + 0.114 * pb;
              luma += l;
              luma2 += l * l;
            }
          }
          const mean = luma / n;
          const varL = Math.max(0, luma2 / n - mean * mean);
          const base = (gy * GRID + gx) * 4;
          out[base] = r / n;
          out[base + 1] = g / n;
          out[base + 2] = b / n;
          out[base + 3] = Math.sqrt(varL);
        }
      }
      return out;
    },
  };
}

/**
 * 128-d audio descriptor: 64 sub-window log-energies plus 64 Goertzel band
 * magnitudes on a log-spaced frequency grid up to Nyquist.
 */
function bandEnergy(): AudioBackbone {
  const HALF = 64;
  return {
    name: 'band-energy',
    dim: HALF * 2,
    embed(window: Float32Array, sampleRate: number): Float32Array {
      const out = new Float32Array(HALF * 2);
      const n = window.length;
      if (n === 0) return out; // silent/empty window -> all zeros, still finite
      for (let k = 0; k < HALF; k++) {
        const a = Math.floor((k * n) / HALF);
        const b = Math.max(a + 1, Math.floor(((k + 1) * n) / HALF));
        let e = 0;
        for (let i = a; i < b; i++) e += window[i] * window[i];
        out[k] = Math.log1p(e / (b - a));
      }
      const nyquist = sampleRate / 2;
      for (let k = 0; k < HALF; k++) {
        // log-spaced band centers from 50 Hz to Nyquist
        const freq = 50 * Math.pow(nyquist / 50, k / (HALF - 1));
        const omega = (2 * Math.PI * freq) / sampleRate;
        const coeff = 2 * Math.cos(omega);
        let s0 = 0, s1 = 0, s2 = 0;
        for (let i = 0; i < n; i++) {
          s0 = window[i] + coeff * s1 - s2;
          s2 = s1;
          s1 = s0;
        }
        const power = s1 * s1 + s2 * s2 - coeff * s1 * s2;
        out[HALF + k] = Math.log1p(Math.max(0, power) / n);
      }
      return out;
    },
  };
}
