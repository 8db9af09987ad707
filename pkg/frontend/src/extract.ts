/**
 * Extraction orchestration: a directory of PPM frame dumps plus a WAV track
 * become one visual and one audio feature file with equal T, and a manifest
 * entry pointing at them.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { audioBackbone, visualBackbone } from './backbones.js';
import { encodeFeatures, FeatureSequence } from './featureFile.js';
import { decodePpm } from './ppm.js';
import { decodeWav, resample, toMono } from './wav.js';

export interface ExtractionSpec {
  /** Directory of P6 PPM frames, lexicographic order = temporal order. */
  framesDir: string;
  wavPath: string;
  videoId: string;
  outDir: string;
  /** Sampling rate of the frame dump in frames per second. */
  fps?: number;
  visualBackbone?: string;
  audioBackbone?: string;
  audioSampleRate?: number;
}

export interface ManifestEntry {
  id: string;
  visual: string;
  audio: string;
  fps: number;
  n_frames: number;
  fold: number;
  user_scores: number[][];
}

export interface ExtractionResult {
  visualPath: string;
  audioPath: string;
  entry: ManifestEntry;
}

export function extract(spec: ExtractionSpec): ExtractionResult {
  const fps = spec.fps ?? 2;
  const rate = spec.audioSampleRate ?? 22050;
  if (fps <= 0) throw new Error('fps must be positive');

  const frameFiles = fs
    .readdirSync(spec.framesDir)
    .filter((f) => f.endsWith('.ppm'))
    .sort();
  if (frameFiles.length === 0) {
    throw new Error(`no .ppm frames found in ${spec.framesDir}`);
  }

  const vb = visualBackbone(spec.visualBackbone ?? 'grid-stats');
  const ab = audioBackbone(spec.audioBackbone ?? 'band-energy');

  const visualRows = frameFiles.map((f) =>
    vb.embed(decodePpm(fs.readFileSync(path.join(spec.framesDir, f)))),
  );

  const wav = decodeWav(fs.readFileSync(spec.wavPath));
  const mono = resample(toMono(wav), wav.sampleRate, rate);

  // one audio vector per sampled frame, pooled from the co-occurrent
  // waveform span [t - 0.5/fps, t + 0.5/fps]
  const T = visualRows.length;
  const halfWindow = Math.round((0.5 / fps) * rate);
  const audioRows: Float32Array[] = [];
  for (let t = 0; t < T; t++) {
    const center = Math.round(((t + 0.5) / fps) * rate);
    const a = Math.max(0, center - halfWindow);
    const b = Math.min(mono.length, center + halfWindow);
    audioRows.push(ab.embed(mono.subarray(a, Math.max(a, b)), rate));
  }

  const visual: FeatureSequence = { modality: 'visual', rows: visualRows };
  const audio: FeatureSequence = { modality: 'audio', rows: audioRows };

  fs.mkdirSync(spec.outDir, { recursive: true });
  const visualName = `${spec.videoId}.visual.mf2f`;
  const audioName = `${spec.videoId}.audio.mf2f`;
  const visualPath = path.join(spec.outDir, visualName);
  const audioPath = path.join(spec.outDir, audioName);
  fs.writeFileSync(visualPath, encodeFeatures(visual));
  fs.writeFileSync(audioPath, encodeFeatures(audio));

  return {
    visualPath,
    audioPath,
    entry: {
      id: spec.videoId,
      visual: visualName,
      audio: audioName,
      fps,
      n_frames: T,
      fold: 0,
      user_scores: [],
    },
  };
}

/** Write/merge manifest entries into `dataset.manifest` in outDir. */
export function writeManifest(
  outDir: string,
  entries: ManifestEntry[],
  datasetName = 'exported',
): string {
  const manifestPath = path.join(outDir, 'dataset.manifest');
  let existing: ManifestEntry[] = [];
  if (fs.existsSync(manifestPath)) {
    const doc = JSON.parse(fs.readFileSync(manifestPath, 'utf8'));
    existing = (doc.videos ?? []).filter(
      (v: ManifestEntry) => !entries.some((e) => e.id === v.id),
    );
  }
  const videos = [...existing, ...entries].sort((a, b) => a.id.localeCompare(b.id));
  const doc = { dataset: datasetName, videos };
  fs.writeFileSync(manifestPath, JSON.stringify(doc, null, 1) + '\n');
  return manifestPath;
}
