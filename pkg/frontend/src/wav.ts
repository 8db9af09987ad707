/**
 * Minimal RIFF/WAV reader for PCM input, plus mono mixdown and linear
 * resampling. Handles 16-bit PCM (format 1) and 32-bit float (format 3).
 */

export interface WavData {
  sampleRate: number;
  channels: number;
  /** One Float32Array per channel, samples in [-1, 1]. */
  samples: Float32Array[];
}

export function decodeWav(buf: Buffer): WavData {
  if (buf.length < 44 || buf.toString('ascii', 0, 4) !== 'RIFF' || buf.toString('ascii', 8, 12) !== 'WAVE') {
    throw new Error('not a RIFF/WAVE file');
  }
  let fmt: { format: number; channels: number; sampleRate: number; bits: number } | null = null;
  let data: Buffer | null = null;
  let off = 12;
  while (off + 8 <= buf.length) {
    const id = buf.toString('ascii', off, off + 4);
    const size = buf.readUInt32LE(off + 4);
    const body = buf.subarray(off + 8, off + 8 + size);
    if (id === 'fmt ') {
      fmt = {
        format: body.readUInt16LE(0),
        channels: body.readUInt16LE(2),
        sampleRate: body.readUInt32LE(4),
        bits: body.readUInt16LE(14),
      };
    } else if (id === 'data') {
      data = body;
    }
    off += 8 + size + (size % 2); // chunks are word-aligned
  }
  if (!fmt || !data) throw new Error('missing fmt or data chunk');
  if (!(fmt.format === 1 && fmt.bits === 16) && !(fmt.format === 3 && fmt.bits === 32)) {
    throw new Error(`unsupported WAV encoding: format ${fmt.format}, ${fmt.bits}-bit`);
  }
  const bytesPer = fmt.bits / 8;
  const frames = Math.floor(data.length / (bytesPer * fmt.channels));
  const samples = Array.from({ length: fmt.channels }, () => new Float32Array(frames));
  for (let i = 0; i < frames; i++) {
    for (let c = 0; c < fmt.channels; c++) {
      const p = (i * fmt.channels + c) * bytesPer;
      samples[c][i] =
        fmt.format === 1 ? data.readInt16LE(p) / 32768.0 : data.readFloatLE(p);
    }
  }
  return { sampleRate: fmt.sampleRate, channels: fmt.channels, samples };
}

export function toMono(wav: WavData): Float32Array {
  if (wav.channels === 1) return wav.samples[0];
  const n = wav.samples[0].length;
  const mono = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    let sum = 0;
    for (const ch of wav.samples) sum += ch[i];
    mono[i] = sum / wav.channels;
  }
  return mono;
}

/** Linear-interpolation resample to the target rate. */
export function resample(mono: Float32Array, fromRate: number, toRate: number): Float32Array {
  if (fromRate === toRate) return mono;
  const outLen = Math.max(1, Math.round((mono.length * toRate) / fromRate));
  const out = new Float32Array(outLen);
  const step = fromRate / toRate;
  for (let i = 0; i < outLen; i++) {
    const pos = i * step;
    const i0 = Math.floor(pos);
    const i1 = Math.min(i0 + 1, mono.length - 1);
    const frac = pos - i0;
    out[i] = mono[Math.min(i0, mono.length - 1)] * (1 - frac) + mono[i1] * frac;
  }
  return out;
}

/** Encode a mono float signal as 16-bit PCM WAV (used by tests/fixtures). */
export function encodeWav(mono: Float32Array, sampleRate: number, channels = 1): Buffer {
  const frames = mono.length;
  const dataSize = frames * channels * 2;
  const buf = Buffer.alloc(44 + dataSize);
  buf.write('RIFF', 0, 'ascii');
  buf.writeUInt32LE(36 + dataSize, 4);
  buf.write('WAVE', 8, 'ascii');
  buf.write('fmt ', 12, 'ascii');
  buf.writeUInt32LE(16, 16);
  buf.writeUInt16LE(1, 20); // PCM
  buf.writeUInt16LE(channels, 22);
  buf.writeUInt32LE(sampleRate, 24);
  buf.writeUInt32LE(sampleRate * channels * 2, 28);
  buf.writeUInt16LE(channels * 2, 32);
  buf.writeUInt16LE(16, 34);
  buf.write('data', 36, 'ascii');
  buf.writeUInt32LE(dataSize, 40);
  for (let i = 0; i < frames; i++) {
    const v = Math.max(-1, Math.min(1, mono[i]));
    for (let c = 0; c < channels; c++) {
      buf.writeInt16LE(Math.round(v * 32767), 44 + (i * channels + c) * 2);
    }
  }
  return buf;
}
