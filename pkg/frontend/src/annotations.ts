/**
 * Converter for tab-separated per-frame importance annotations
 * (one row per user: `video_id<TAB>category<TAB>s1,s2,...,sN`).
 * Scores on a 1-5 scale are normalized to [0,1]; scores already in [0,1]
 * pass through unchanged. Frame counts are resampled to the exported T.
 */

export interface AnnotationSet {
  videoId: string;
  /** One row per user, values in [0,1]. */
  userScores: number[][];
}

export function parseAnnotations(tsv: string): Map<string, number[][]> {
  const byVideo = new Map<string, number[][]>();
  for (const [lineNo, raw] of tsv.split('\n').entries()) {
    const line = raw.trim();
    if (!line) continue;
    const parts = line.split('\t');
    if (parts.length < 3) {
      throw new Error(`line ${lineNo + 1}: expected "id<TAB>category<TAB>scores", got ${parts.length} fields`);
    }
    const id = parts[0];
    const scores = parts[2].split(',').map((s) => {
      const v = Number(s);
      if (!Number.isFinite(v)) throw new Error(`line ${lineNo + 1}: non-numeric score '${s}'`);
      return v;
    });
    if (scores.length === 0) throw new Error(`line ${lineNo + 1}: empty score list`);
    if (!byVideo.has(id)) byVideo.set(id, []);
    byVideo.get(id)!.push(scores);
  }
  return byVideo;
}

/** 1-5 ratings map to [0,1] via (x-1)/4; values already in [0,1] pass through. */
export function normalizeScores(row: number[]): number[] {
  const min = Math.min(...row);
  const max = Math.max(...row);
  if (min >= 0 && max <= 1) return row.slice();
  if (min >= 1 && max <= 5) return row.map((x) => (x - 1) / 4);
  throw new Error(`score range [${min}, ${max}] is neither [0,1] nor 1-5`);
}

/** Nearest-neighbor resample of a per-frame score row to targetT frames. */
export function resampleScores(row: number[], targetT: number): number[] {
  if (targetT < 1) throw new Error('targetT must be >= 1');
  if (row.length === targetT) return row.slice();
  const out = new Array<number>(targetT);
  for (let t = 0; t < targetT; t++) {
    const src = Math.min(row.length - 1, Math.floor(((t + 0.5) * row.length) / targetT));
    out[t] = row[src];
  }
  return out;
}

export function convertAnnotations(
  tsv: string,
  videoId: string,
  targetT: number,
  sourceFrames?: number,
): AnnotationSet {
  const byVideo = parseAnnotations(tsv);
  const rows = byVideo.get(videoId);
  if (!rows) {
    const known = [...byVideo.keys()].join(', ');
    throw new Error(`video '${videoId}' not in annotation file (has: ${known})`);
  }
  if (sourceFrames !== undefined) {
    for (const row of rows) {
      if (row.length !== sourceFrames) {
        throw new Error(
          `video '${videoId}': annotation row has ${row.length} frames, expected ${sourceFrames}`,
        );
      }
    }
  }
  const userScores = rows.map((row) => resampleScores(normalizeScores(row), targetT));
  return { videoId, userScores };
}
