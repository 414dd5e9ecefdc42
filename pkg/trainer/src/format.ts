/**
 * Binary containers shared with the hsiaccel toolkit, all little-endian.
 *
 * HSIC cube:   "HSIC", u32 version=1, u32 width/height/bands, u8 dtype=1,
 *              float32 payload band-sequential row-major.
 * HSIL labels: "HSIL", u32 version=1, u32 width/height, u16 per pixel.
 * HSIW weights:"HSIW", u32 version=1, u32 layer_count; per layer u8 kind
 *              (1=conv3x3, 2=conv1x1, 3=fc) then kernel and bias tensors:
 *              u8 rank, u32 dims[rank], u8 has_quant, [i8 exponent],
 *              float32 payload, [int16 payload].
 */
import * as fs from "fs";

export interface Cube {
  width: number;
  height: number;
  bands: number;
  /** (y, x, band) C-order */
  data: Float64Array;
}

export interface Labels {
  width: number;
  height: number;
  /** (y, x) row-major, 0 = unlabeled */
  data: Uint16Array;
}

export interface Tensor {
  dims: number[];
  data: Float64Array; // float32 values held exactly
}

export interface WeightLayer {
  kind: "conv3x3" | "conv1x1" | "fc";
  w: Tensor;
  b: Tensor;
}

const KIND_CODES: Record<WeightLayer["kind"], number> = { conv3x3: 1, conv1x1: 2, fc: 3 };
const CODE_KINDS: Record<number, WeightLayer["kind"]> = { 1: "conv3x3", 2: "conv1x1", 3: "fc" };

class Reader {
  private off = 0;
  constructor(private buf: Buffer, private what: string) {}

  bytes(n: number): Buffer {
    if (this.off + n > this.buf.length) {
      throw new Error(`${this.what}: truncated at offset ${this.off}`);
    }
    const out = this.buf.subarray(this.off, this.off + n);
    this.off += n;
    return out;
  }

  u8(): number {
    return this.bytes(1).readUInt8(0);
  }

  i8(): number {
    return this.bytes(1).readInt8(0);
  }

  u32(): number {
    return this.bytes(4).readUInt32LE(0);
  }

  done(): boolean {
    return this.off === this.buf.length;
  }
}

export function readCube(path: string): Cube {
  const r = new Reader(fs.readFileSync(path), path);
  if (r.bytes(4).toString("latin1") !== "HSIC") throw new Error(`${path}: bad cube magic`);
  const version = r.u32();
  if (version !== 1) throw new Error(`${path}: unsupported cube version ${version}`);
  const width = r.u32();
  const height = r.u32();
  const bands = r.u32();
  const dtype = r.u8();
  if (dtype !== 1) throw new Error(`${path}: unsupported dtype ${dtype}`);
  const n = width * height * bands;
  const payload = r.bytes(4 * n);
  const data = new Float64Array(n);
  // stored band-major; convert to (y, x, band)
  for (let b = 0; b < bands; b++) {
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        data[(y * width + x) * bands + b] = payload.readFloatLE(((b * height + y) * width + x) * 4);
      }
    }
  }
  return { width, height, bands, data };
}

export function writeCube(cube: Cube, path: string): void {
  const { width, height, bands } = cube;
  const head = Buffer.alloc(21);
  head.write("HSIC", 0, "latin1");
  head.writeUInt32LE(1, 4);
  head.writeUInt32LE(width, 8);
  head.writeUInt32LE(height, 12);
  head.writeUInt32LE(bands, 16);
  head.writeUInt8(1, 20);
  const payload = Buffer.alloc(4 * width * height * bands);
  for (let b = 0; b < bands; b++) {
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        payload.writeFloatLE(
          Math.fround(cube.data[(y * width + x) * bands + b]),
          ((b * height + y) * width + x) * 4,
        );
      }
    }
  }
  fs.writeFileSync(path, Buffer.concat([head, payload]));
}

export function readLabels(path: string): Labels {
  const r = new Reader(fs.readFileSync(path), path);
  if (r.bytes(4).toString("latin1") !== "HSIL") throw new Error(`${path}: bad label magic`);
  const version = r.u32();
  if (version !== 1) throw new Error(`${path}: unsupported label version ${version}`);
  const width = r.u32();
  const height = r.u32();
  const payload = r.bytes(2 * width * height);
  const data = new Uint16Array(width * height);
  for (let i = 0; i < data.length; i++) data[i] = payload.readUInt16LE(2 * i);
  return { width, height, data };
}

export function writeLabels(labels: Labels, path: string): void {
  const head = Buffer.alloc(16);
  head.write("HSIL", 0, "latin1");
  head.writeUInt32LE(1, 4);
  head.writeUInt32LE(labels.width, 8);
  head.writeUInt32LE(labels.height, 12);
  const payload = Buffer.alloc(2 * labels.data.length);
  for (let i = 0; i < labels.data.length; i++) payload.writeUInt16LE(labels.data[i], 2 * i);
  fs.writeFileSync(path, Buffer.concat([head, payload]));
}

function writeTensor(parts: Buffer[], t: Tensor): void {
  const head = Buffer.alloc(1 + 4 * t.dims.length + 1);
  head.writeUInt8(t.dims.length, 0);
  t.dims.forEach((d, i) => head.writeUInt32LE(d, 1 + 4 * i));
  head.writeUInt8(0, 1 + 4 * t.dims.length); // has_quant = 0: float export
  parts.push(head);
  const payload = Buffer.alloc(4 * t.data.length);
  for (let i = 0; i < t.data.length; i++) payload.writeFloatLE(Math.fround(t.data[i]), 4 * i);
  parts.push(payload);
}

export function writeWeights(layers: WeightLayer[], path: string): void {
  const head = Buffer.alloc(12);
  head.write("HSIW", 0, "latin1");
  head.writeUInt32LE(1, 4);
  head.writeUInt32LE(layers.length, 8);
  const parts: Buffer[] = [head];
  for (const layer of layers) {
    parts.push(Buffer.from([KIND_CODES[layer.kind]]));
    writeTensor(parts, layer.w);
    writeTensor(parts, layer.b);
  }
  fs.writeFileSync(path, Buffer.concat(parts));
}

function readTensor(r: Reader, what: string): Tensor {
  const rank = r.u8();
  if (rank < 1 || rank > 4) throw new Error(`${what}: bad tensor rank ${rank}`);
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) dims.push(r.u32());
  const hasQuant = r.u8();
  if (hasQuant !== 0 && hasQuant !== 1) throw new Error(`${what}: bad quant flag`);
  if (hasQuant) r.i8();
  const n = dims.reduce((a, b) => a * b, 1);
  const payload = r.bytes(4 * n);
  const data = new Float64Array(n);
  for (let i = 0; i < n; i++) data[i] = payload.readFloatLE(4 * i);
  if (hasQuant) r.bytes(2 * n); // skip the int16 copy
  return { dims, data };
}

export function readWeights(path: string): WeightLayer[] {
  const r = new Reader(fs.readFileSync(path), path);
  if (r.bytes(4).toString("latin1") !== "HSIW") throw new Error(`${path}: bad weight magic`);
  const version = r.u32();
  if (version !== 1) throw new Error(`${path}: unsupported weight version ${version}`);
  const count = r.u32();
  const layers: WeightLayer[] = [];
  for (let i = 0; i < count; i++) {
    const kind = CODE_KINDS[r.u8()];
    if (!kind) throw new Error(`${path}: unknown layer kind`);
    const w = readTensor(r, path);
    const b = readTensor(r, path);
    layers.push({ kind, w, b });
  }
  if (!r.done()) throw new Error(`${path}: trailing bytes`);
  return layers;
}
