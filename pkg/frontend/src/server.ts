/**
 * HTTP surface: POST /explain and GET /health per the downstream service
 * contract. The model is reached through the endpoint named in each request,
 * so this service is stateless and horizontally scalable.
 */

import express, { Express, Request, Response } from "express";

import {
  ModelCallError,
  occlusionSaliency,
  thresholdMask,
} from "./occlusion";
import { ImageTensor, parseImage, parseParams, SchemaError } from "./tensors";

export const METHOD_NAME = "occlusion-external";
export const METHOD_VERSION = "0.1.0";

function errorBody(code: string, message: string, details?: object) {
  return { error: { code, message, ...(details ? { details } : {}) } };
}

/** POST {endpoint}/predict and return the confidence field. */
async function remotePredict(
  endpoint: string,
  image: ImageTensor,
): Promise<number> {
  const response = await fetch(`${endpoint}/predict`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ image }),
  });
  if (!response.ok) {
    throw new Error(`model endpoint returned HTTP ${response.status}`);
  }
  const body = (await response.json()) as { confidence?: unknown };
  if (typeof body.confidence !== "number") {
    throw new Error("model response is missing a numeric confidence");
  }
  return body.confidence;
}

export function createApp(): Express {
  const app = express();
  app.use(express.json({ limit: "16mb" }));

  app.get("/health", (_req: Request, res: Response) => {
    res.json({ status: "ok", method: METHOD_NAME, version: METHOD_VERSION });
  });

  app.post("/explain", async (req: Request, res: Response) => {
    let image: ImageTensor;
    let modelEndpoint: string;
    let params;
    try {
      const body = req.body ?? {};
      image = parseImage(body.image);
      if (typeof body.model_endpoint !== "string" || !body.model_endpoint) {
        throw new SchemaError("model_endpoint must be a nonempty string");
      }
      modelEndpoint = body.model_endpoint;
      params = parseParams(body.params);
    } catch (err) {
      if (err instanceof SchemaError) {
        res.status(400).json(errorBody("schema_violation", err.message));
        return;
      }
      throw err;
    }

    try {
      const predict = (img: ImageTensor) => remotePredict(modelEndpoint, img);
      const saliency = await occlusionSaliency(predict, image, params);
      const mask = thresholdMask(saliency, params.q);
      res.json({
        saliency,
        mask,
        method: { name: METHOD_NAME, version: METHOD_VERSION },
      });
    } catch (err) {
      if (err instanceof ModelCallError) {
        res.status(502).json(
          errorBody("model_failure", err.message, {
            placement: err.placement,
          }),
        );
        return;
      }
      res
        .status(500)
        .json(errorBody("internal_error", `${err}`));
    }
  });

  return app;
}
