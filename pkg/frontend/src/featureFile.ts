/**
 * Binary feature file format shared with the summarization package.
 *
 * Layout (little-endian):
 *   magic "MF2F" | version u16 | modality u8 (0=visual, 1=audio) | T u32 | d u32
 * followed by T*d float32 values, row-major.
 */

export const MAGIC = 'MF2F';
export const VERSION = 1;
export const HEADER_BYTES = 15;

export type Modality = 'visual' | 'audio';

export interface FeatureSequence {
  modality: Modality;
  /** T rows of d values each. */
  rows: Float32Array[];
}

const MODALITY_CODE: Record<Modality, number> = { visual: 0, audio: 1 };

export function encodeFeatures(seq: FeatureSequence): Buffer {
  const T = seq.rows.length;
  if (T === 0) throw new Error('feature sequence must have at least one frame');
  const d = seq.rows[0].length;
  for (const [i, row] of seq.rows.entries()) {
    if (row.length !== d) {
      throw new Error(`row ${i} has length ${row.length}, expected ${d}`);
    }
    for (const x of row) {
      if (!Number.isFinite(x)) throw new Error(`row ${i} contains a non-finite value`);
    }
  }
  const buf = Buffer.alloc(HEADER_BYTES + T * d * 4);
  buf.write(MAGIC, 0, 'ascii');
  buf.writeUInt16LE(VERSION, 4);
  buf.writeUInt8(MODALITY_CODE[seq.modality], 6);
  buf.writeUInt32LE(T, 7);
  buf.writeUInt32LE(d, 11);
  let off = HEADER_BYTES;
  for (const row of seq.rows) {
    for (const x of row) {
      buf.writeFloatLE(x, off);
      off += 4;
    }
  }
  return buf;
}

export function decodeFeatures(buf: Buffer): FeatureSequence {
  if (buf.length < HEADER_BYTES) {
    throw new Error(`file too short for header: ${buf.length} bytes`);
  }
  const magic = buf.toString('ascii', 0, 4);
  if (magic !== MAGIC) throw new Error(`bad magic ${JSON.stringify(magic)}, expected ${MAGIC}`);
  const version = buf.readUInt16LE(4);
  if (version !== VERSION) throw new Error(`unsupported version ${version}`);
  const code = buf.readUInt8(6);
  const modality = (Object.keys(MODALITY_CODE) as Modality[]).find(
    (m) => MODALITY_CODE[m] === code,
  );
  if (modality === undefined) throw new Error(`unknown modality code ${code}`);
  const T = buf.readUInt32LE(7);
  const d = buf.readUInt32LE(11);
  const expected = HEADER_BYTES + T * d * 4;
  if (buf.length !== expected) {
    throw new Error(`payload length mismatch: expected ${expected} bytes, got ${buf.length}`);
  }
  const rows: Float32Array[] = [];
  for (let t = 0; t < T; t++) {
    const row = new Float32Array(d);
    for (let j = 0; j < d; j++) {
      row[j] = buf.readFloatLE(HEADER_BYTES + (t * d + j) * 4);
    }
    rows.push(row);
  }
  return { modality, rows };
}
