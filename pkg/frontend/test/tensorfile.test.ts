import { describe, expect, it } from "vitest";

import {
  FormatError,
  ShapeError,
  decodeTensor,
  encodeTensor,
  tensor,
} from "../src/index.js";

function f32(values: number[], shape: number[]) {
  return tensor(Float32Array.from(values), shape);
}

describe("tensor encoding", () => {
  it("round-trips float32 tensors byte-exactly across ranks 1..8", () => {
    for (let rank = 1; rank <= 8; rank += 1) {
      const shape = Array.from({ length: rank }, (_, i) => (i % 3) + 1);
      const count = shape.reduce((a, b) => a * b, 1);
      const data = Float32Array.from(
        { length: count }, (_, i) => Math.fround(Math.sin(i + rank) * 10));
      const decoded = decodeTensor(encodeTensor(tensor(data, shape)));
      expect(decoded.dtype).toBe("f32");
      expect(decoded.shape).toEqual(shape);
      expect(Buffer.from(decoded.data.buffer)).toEqual(Buffer.from(data.buffer));
    }
  });

  it("round-trips int32 tensors", () => {
    const data = Int32Array.from([-(2 ** 31), -7, 0, 42, 2 ** 31 - 1, 9]);
    const decoded = decodeTensor(encodeTensor(tensor(data, [2, 3])));
    expect(decoded.dtype).toBe("i32");
    expect(decoded.shape).toEqual([2, 3]);
    expect([...(decoded.data as Int32Array)]).toEqual([...data]);
  });

  it("writes the reference rank-3 header byte-for-byte", () => {
    const bytes = encodeTensor(tensor(new Float32Array(16), [4, 2, 2]));
    const header = Buffer.concat([
      Buffer.from("ASQLTNSR", "ascii"),
      Buffer.from([1, 0, 0, 0]),   // version 1, little-endian u32
      Buffer.from([1]),            // dtype float32
      Buffer.from([3]),            // rank
      Buffer.from("040000000200000002000000", "hex"),
    ]);
    expect(bytes.subarray(0, 26)).toEqual(header);
    expect(bytes.length).toBe(26 + 16 * 4);
  });

  it("rejects inconsistent shapes at construction", () => {
    expect(() => f32([1, 2, 3], [2, 2])).toThrow(ShapeError);
    expect(() => f32([1], [])).toThrow(ShapeError);
    expect(() => f32([1], [1, 1, 1, 1, 1, 1, 1, 1, 1])).toThrow(ShapeError);
    expect(() => f32([], [0])).toThrow(ShapeError);
    expect(() => f32([1], [1.5])).toThrow(ShapeError);
  });

  it("rejects malformed files", () => {
    const good = encodeTensor(f32([1, 2, 3, 4], [2, 2]));

    const badMagic = Buffer.from(good);
    badMagic.write("XSQLTNSR", 0, "ascii");
    expect(() => decodeTensor(badMagic)).toThrow(FormatError);
    expect(() => decodeTensor(badMagic)).toThrow(/magic/);

    const badVersion = Buffer.from(good);
    badVersion.writeUInt32LE(2, 8);
    expect(() => decodeTensor(badVersion)).toThrow(/version/);

    const badDtype = Buffer.from(good);
    badDtype.writeUInt8(3, 12);
    expect(() => decodeTensor(badDtype)).toThrow(/dtype/);

    const badRank = Buffer.from(good);
    badRank.writeUInt8(0, 13);
    expect(() => decodeTensor(badRank)).toThrow(/rank/);

    const zeroDim = Buffer.from(good);
    zeroDim.writeUInt32LE(0, 14);
    expect(() => decodeTensor(zeroDim)).toThrow(/dimension/);

    expect(() => decodeTensor(good.subarray(0, 10))).toThrow(/truncated/);
    expect(() => decodeTensor(good.subarray(0, good.length - 2)))
      .toThrow(/truncated/);
    expect(() => decodeTensor(Buffer.concat([good, Buffer.from([0])])))
      .toThrow(/trailing/);
  });

  it("decodes into aligned, independently owned buffers", () => {
    const encoded = encodeTensor(f32([1.5, -2.5], [2]));
    // Force a misaligned source window to mimic pooled file reads.
    const shifted = Buffer.alloc(encoded.length + 1);
    encoded.copy(shifted, 1);
    const decoded = decodeTensor(shifted.subarray(1));
    expect([...(decoded.data as Float32Array)]).toEqual([1.5, -2.5]);
    shifted.fill(0);
    expect([...(decoded.data as Float32Array)]).toEqual([1.5, -2.5]);
  });
});
