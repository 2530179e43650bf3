/**
 * Occlusion saliency: slide a fill-valued window over the image, measure the
 * confidence drop per placement, average drops per pixel over the covering
 * windows, and normalize by the maximum.
 *
 * Placement enumeration, drop clipping (negative drops count as zero), mean
 * accumulation order, and the top-q mask tie rule (row-major wins) follow
 * the published endpoint contract exactly, so independent implementations
 * agree pixel for pixel.
 */

import {
  ExplainParams,
  ImageTensor,
  MaskTensor,
  SaliencyTensor,
} from "./tensors";

export type PredictFn = (image: ImageTensor) => Promise<number>;

export class ModelCallError extends Error {
  /** Placement index of the failing call; null for the baseline call. */
  placement: number | null;

  constructor(message: string, placement: number | null) {
    super(message);
    this.placement = placement;
  }
}

interface Placement {
  y: number;
  x: number;
  h: number;
  w: number;
}

/** Window top-left corners at stride multiples; window clamped to fit. */
export function placements(
  height: number,
  width: number,
  window: number,
  stride: number,
): Placement[] {
  const wh = Math.min(window, height);
  const ww = Math.min(window, width);
  const out: Placement[] = [];
  for (let y = 0; y + wh <= height; y += stride) {
    for (let x = 0; x + ww <= width; x += stride) {
      out.push({ y, x, h: wh, w: ww });
    }
  }
  return out;
}

function occlude(image: ImageTensor, spot: Placement, fill: number): ImageTensor {
  const pixels = image.pixels.slice();
  for (let y = spot.y; y < spot.y + spot.h; y++) {
    for (let x = spot.x; x < spot.x + spot.w; x++) {
      const base = (y * image.width + x) * image.channels;
      for (let c = 0; c < image.channels; c++) {
        pixels[base + c] = fill;
      }
    }
  }
  return { ...image, pixels };
}

async function call(
  predict: PredictFn,
  image: ImageTensor,
  placement: number | null,
): Promise<number> {
  try {
    return await predict(image);
  } catch (err) {
    const where = placement === null ? "baseline call" : `placement ${placement}`;
    throw new ModelCallError(`model failed on ${where}: ${err}`, placement);
  }
}

export async function occlusionSaliency(
  predict: PredictFn,
  image: ImageTensor,
  params: ExplainParams,
): Promise<SaliencyTensor> {
  const base = await call(predict, image, null);
  const spots = placements(image.height, image.width, params.window, params.stride);
  const size = image.height * image.width;
  const drops = new Float64Array(size);
  const cover = new Float64Array(size);
  for (let i = 0; i < spots.length; i++) {
    const spot = spots[i];
    const confidence = await call(predict, occlude(image, spot, params.fill), i);
    const drop = Math.max(0.0, base - confidence);
    for (let y = spot.y; y < spot.y + spot.h; y++) {
      for (let x = spot.x; x < spot.x + spot.w; x++) {
        drops[y * image.width + x] += drop;
        cover[y * image.width + x] += 1.0;
      }
    }
  }
  const raw = new Float64Array(size);
  let top = 0.0;
  for (let i = 0; i < size; i++) {
    raw[i] = cover[i] > 0 ? drops[i] / cover[i] : 0.0;
    top = Math.max(top, raw[i]);
  }
  const scores = new Array<number>(size);
  for (let i = 0; i < size; i++) {
    scores[i] = top > 0 ? raw[i] / top : 0.0;
  }
  return { height: image.height, width: image.width, scores };
}

/** Keep exactly ceil(q*H*W) top pixels; ties break toward earlier pixels. */
export function thresholdMask(saliency: SaliencyTensor, q: number): MaskTensor {
  const size = saliency.height * saliency.width;
  const k = Math.min(Math.ceil(q * saliency.height * saliency.width), size);
  const order = Array.from({ length: size }, (_, i) => i);
  order.sort((a, b) => saliency.scores[b] - saliency.scores[a] || a - b);
  const keep = new Array<boolean>(size).fill(false);
  for (let i = 0; i < k; i++) {
    keep[order[i]] = true;
  }
  return { height: saliency.height, width: saliency.width, keep };
}
