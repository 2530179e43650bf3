/**
 * JSON tensor wire format shared with the coordination service: dimensions
 * plus a flat row-major value list.
 */

export interface ImageTensor {
  height: number;
  width: number;
  channels: number;
  pixels: number[];
}

export interface SaliencyTensor {
  height: number;
  width: number;
  scores: number[];
}

export interface MaskTensor {
  height: number;
  width: number;
  keep: boolean[];
}

export class SchemaError extends Error {}

function isPositiveInt(value: unknown): value is number {
  return typeof value === "number" && Number.isInteger(value) && value >= 1;
}

/** Validate an incoming image tensor; throws SchemaError on any defect. */
export function parseImage(payload: unknown): ImageTensor {
  if (typeof payload !== "object" || payload === null) {
    throw new SchemaError("image must be a tensor object");
  }
  const body = payload as Record<string, unknown>;
  if (!isPositiveInt(body.height) || !isPositiveInt(body.width)) {
    throw new SchemaError("image height/width must be positive integers");
  }
  if (body.channels !== 1 && body.channels !== 3) {
    throw new SchemaError("image channels must be 1 or 3");
  }
  const expected = body.height * body.width * body.channels;
  if (!Array.isArray(body.pixels) || body.pixels.length !== expected) {
    throw new SchemaError(
      `image pixels must be a flat list of length ${expected}`,
    );
  }
  for (const v of body.pixels) {
    if (typeof v !== "number" || !Number.isFinite(v) || v < 0 || v > 1) {
      throw new SchemaError("image pixels must be finite numbers in [0, 1]");
    }
  }
  return {
    height: body.height,
    width: body.width,
    channels: body.channels,
    pixels: body.pixels as number[],
  };
}

export interface ExplainParams {
  window: number;
  stride: number;
  fill: number;
  q: number;
}

const DEFAULTS: ExplainParams = { window: 1, stride: 1, fill: 0.0, q: 0.5 };

export function parseParams(payload: unknown): ExplainParams {
  const body = (payload ?? {}) as Record<string, unknown>;
  const params = { ...DEFAULTS };
  for (const key of ["window", "stride"] as const) {
    if (body[key] !== undefined) {
      if (!isPositiveInt(body[key])) {
        throw new SchemaError(`param ${key} must be a positive integer`);
      }
      params[key] = body[key] as number;
    }
  }
  if (body.fill !== undefined) {
    const fill = body.fill;
    if (typeof fill !== "number" || fill < 0 || fill > 1) {
      throw new SchemaError("param fill must be a number in [0, 1]");
    }
    params.fill = fill;
  }
  if (body.q !== undefined) {
    const q = body.q;
    if (typeof q !== "number" || !(q > 0) || q > 1) {
      throw new SchemaError("param q must be a number in (0, 1]");
    }
    params.q = q;
  }
  return params;
}
