/**
 * Binary PPM (P6) frame reader/writer. Frame dumps are the video input to the
 * exporter: one `frame_%06d.ppm` per sampled frame.
 */

export interface Frame {
  width: number;
  height: number;
  /** RGB interleaved, one byte per channel. */
  pixels: Uint8Array;
}

export function decodePpm(buf: Buffer): Frame {
  if (buf.toString('ascii', 0, 2) !== 'P6') throw new Error('not a P6 PPM file');
  // header: "P6" <ws> width <ws> height <ws> maxval <single ws> pixels
  let off = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (off < buf.length && isSpace(buf[off])) off++;
    if (buf[off] === 0x23) {
      // comment line
      while (off < buf.length && buf[off] !== 0x0a) off++;
      continue;
    }
    let start = off;
    while (off < buf.length && !isSpace(buf[off])) off++;
    fields.push(parseInt(buf.toString('ascii', start, off), 10));
  }
  off++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (!(width > 0 && height > 0)) throw new Error('bad PPM dimensions');
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}`);
  const need = width * height * 3;
  if (buf.length - off < need) {
    throw new Error(`truncated PPM: need ${need} pixel bytes, have ${buf.length - off}`);
  }
  return { width, height, pixels: new Uint8Array(buf.subarray(off, off + need)) };
}

export function encodePpm(frame: Frame): Buffer {
  const header = Buffer.from(`P6\n${frame.width} ${frame.height}\n255\n`, 'ascii');
  return Buffer.concat([header, Buffer.from(frame.pixels)]);
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}
