// Minimal binary PPM (P6) decoder so uploaded PPM files can be
// previewed client-side; browsers have no native image/x-portable-pixmap
// support.

export interface DecodedImage {
  width: number;
  height: number;
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d || byte === 0x0c;
}

export function decodePpm(bytes: Uint8Array): DecodedImage {
  const tokens: string[] = [];
  let pos = 0;
  while (tokens.length < 4) {
    if (pos >= bytes.length) throw new Error("truncated PPM header");
    const b = bytes[pos];
    if (b === 0x23) {
      // '#' comment runs to end of line
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
    } else if (isSpace(b)) {
      pos++;
    } else {
      let start = pos;
      while (pos < bytes.length && !isSpace(bytes[pos]) && bytes[pos] !== 0x23) pos++;
      tokens.push(String.fromCharCode(...bytes.subarray(start, pos)));
    }
  }
  if (tokens[0] !== "P6") throw new Error(`unsupported PPM magic ${tokens[0]}`);
  const width = Number(tokens[1]);
  const height = Number(tokens[2]);
  const maxval = Number(tokens[3]);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new Error(`bad PPM dimensions ${tokens[1]}x${tokens[2]}`);
  }
  if (!Number.isInteger(maxval) || maxval < 1 || maxval > 255) {
    throw new Error(`unsupported PPM maxval ${tokens[3]}`);
  }
  pos++; // single whitespace after maxval
  const need = width * height * 3;
  if (bytes.length - pos < need) throw new Error("truncated PPM pixel data");

  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    rgba[4 * i] = Math.round((bytes[pos + 3 * i] * 255) / maxval);
    rgba[4 * i + 1] = Math.round((bytes[pos + 3 * i + 1] * 255) / maxval);
    rgba[4 * i + 2] = Math.round((bytes[pos + 3 * i + 2] * 255) / maxval);
    rgba[4 * i + 3] = 255;
  }
  return { width, height, rgba };
}

export function encodePpm(width: number, height: number, rgb: Uint8Array): Uint8Array {
  const header = new TextEncoder().encode(`P6\n${width} ${height}\n255\n`);
  const out = new Uint8Array(header.length + rgb.length);
  out.set(header, 0);
  out.set(rgb, header.length);
  return out;
}
