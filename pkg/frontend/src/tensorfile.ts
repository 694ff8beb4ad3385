/**
 * Binary tensor files, byte-compatible with the CLI's format.
 *
 * Layout (little-endian): 8-byte magic `ASQLTNSR`, u32 version (1),
 * u8 dtype (1 = float32, 2 = int32), u8 rank (1..8), `rank` u32 dims
 * (each >= 1), then the row-major payload.
 */
import { readFileSync, writeFileSync } from "node:fs";

import { FormatError, ShapeError } from "./errors.js";

export const TENSOR_MAGIC = "ASQLTNSR";
export const TENSOR_VERSION = 1;
export const MAX_RANK = 8;

export type TensorDtype = "f32" | "i32";
export type TensorData = Float32Array | Int32Array;

const DTYPE_CODES: Record<TensorDtype, number> = { f32: 1, i32: 2 };
const CODE_DTYPES: Record<number, TensorDtype> = { 1: "f32", 2: "i32" };

/** An in-memory tensor: flat row-major data plus an explicit shape. */
export interface Tensor {
  readonly dtype: TensorDtype;
  readonly shape: readonly number[];
  readonly data: TensorData;
}

function elementCount(shape: readonly number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

/** Wrap a typed array and shape as a Tensor, validating consistency. */
export function tensor(data: TensorData, shape: readonly number[]): Tensor {
  const dtype: TensorDtype = data instanceof Float32Array ? "f32" : "i32";
  if (shape.length < 1 || shape.length > MAX_RANK) {
    throw new ShapeError(`rank must be 1..${MAX_RANK}, got ${shape.length}`);
  }
  for (const dim of shape) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new ShapeError(`dimensions must be positive integers, got ${dim}`);
    }
  }
  if (elementCount(shape) !== data.length) {
    throw new ShapeError(
      `shape [${shape.join(", ")}] holds ${elementCount(shape)} elements, ` +
      `data has ${data.length}`,
    );
  }
  return { dtype, shape: [...shape], data };
}

const HOST_IS_LE = new Uint8Array(new Uint32Array([1]).buffer)[0] === 1;

function byteswapped(bytes: Uint8Array): Uint8Array {
  const out = new Uint8Array(bytes.length);
  for (let i = 0; i < bytes.length; i += 4) {
    out[i] = bytes[i + 3]!;
    out[i + 1] = bytes[i + 2]!;
    out[i + 2] = bytes[i + 1]!;
    out[i + 3] = bytes[i]!;
  }
  return out;
}

/** Serialize a tensor to the binary file format. */
export function encodeTensor(t: Tensor): Buffer {
  const header = Buffer.alloc(14 + 4 * t.shape.length);
  header.write(TENSOR_MAGIC, 0, "ascii");
  header.writeUInt32LE(TENSOR_VERSION, 8);
  header.writeUInt8(DTYPE_CODES[t.dtype], 12);
  header.writeUInt8(t.shape.length, 13);
  t.shape.forEach((dim, i) => header.writeUInt32LE(dim, 14 + 4 * i));
  // Zero-copy view over the caller's data on little-endian hosts.
  let payload: Uint8Array = new Uint8Array(
    t.data.buffer, t.data.byteOffset, t.data.byteLength);
  if (!HOST_IS_LE) {
    payload = byteswapped(payload);
  }
  return Buffer.concat([header, payload]);
}

/** Parse a tensor from bytes; rejects any malformed or trailing content. */
export function decodeTensor(bytes: Uint8Array): Tensor {
  if (bytes.length < 14) {
    throw new FormatError(`truncated header (${bytes.length} bytes)`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const magic = Buffer.from(bytes.subarray(0, 8)).toString("ascii");
  if (magic !== TENSOR_MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(magic)}`);
  }
  const version = view.getUint32(8, true);
  if (version !== TENSOR_VERSION) {
    throw new FormatError(`unsupported version ${version}`);
  }
  const dtype = CODE_DTYPES[view.getUint8(12)];
  if (dtype === undefined) {
    throw new FormatError(`unknown dtype code ${view.getUint8(12)}`);
  }
  const rank = view.getUint8(13);
  if (rank < 1 || rank > MAX_RANK) {
    throw new FormatError(`rank must be 1..${MAX_RANK}, got ${rank}`);
  }
  const headerLength = 14 + 4 * rank;
  if (bytes.length < headerLength) {
    throw new FormatError(`truncated header (${bytes.length} bytes)`);
  }
  const shape: number[] = [];
  for (let i = 0; i < rank; i += 1) {
    const dim = view.getUint32(14 + 4 * i, true);
    if (dim < 1) {
      throw new FormatError(`dimension ${i} must be >= 1, got ${dim}`);
    }
    shape.push(dim);
  }
  const count = elementCount(shape);
  const expected = headerLength + 4 * count;
  if (bytes.length < expected) {
    throw new FormatError(
      `truncated payload: need ${expected} bytes, have ${bytes.length}`);
  }
  if (bytes.length > expected) {
    throw new FormatError(
      `${bytes.length - expected} trailing bytes after payload`);
  }
  // Copy into a fresh aligned buffer (file offsets are not 4-aligned).
  let raw = bytes.subarray(headerLength);
  if (!HOST_IS_LE) {
    raw = byteswapped(raw);
  }
  const payload = new Uint8Array(4 * count);
  payload.set(raw);
  const data = dtype === "f32"
    ? new Float32Array(payload.buffer)
    : new Int32Array(payload.buffer);
  return { dtype, shape, data };
}

/** Read a tensor file from disk. */
export function readTensorFile(path: string): Tensor {
  return decodeTensor(readFileSync(path));
}

/** Write a tensor file to disk. */
export function writeTensorFile(path: string, t: Tensor): void {
  writeFileSync(path, encodeTensor(t));
}
