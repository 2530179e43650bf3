import { AddressInfo } from "node:net";
import { Server } from "node:http";

import express from "express";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { createApp, METHOD_NAME } from "../src/server";
import { ImageTensor } from "../src/tensors";

function listen(app: express.Express): Promise<{ server: Server; url: string }> {
  return new Promise((resolve) => {
    const server = app.listen(0, "127.0.0.1", () => {
      const { port } = server.address() as AddressInfo;
      resolve({ server, url: `http://127.0.0.1:${port}` });
    });
  });
}

/** Stub model endpoint: linear scorer over one fixed weight grid. */
function stubModelApp(weights: number[][]): express.Express {
  const app = express();
  app.use(express.json({ limit: "16mb" }));
  app.post("/predict", (req, res) => {
    const image = req.body.image as ImageTensor;
    let dot = 0;
    for (let y = 0; y < image.height; y++) {
      for (let x = 0; x < image.width; x++) {
        dot += weights[y][x] * image.pixels[y * image.width + x];
      }
    }
    const confidence = Math.min(1, Math.max(0, 0.5 + 0.1 * dot));
    res.json({
      label: "object",
      confidence,
      distribution: { object: confidence, background: 1 - confidence },
    });
  });
  return app;
}

const image: ImageTensor = {
  height: 2,
  width: 2,
  channels: 1,
  pixels: [1, 1, 1, 1],
};

describe("explanation service", () => {
  let explainUrl: string;
  let modelUrl: string;
  const servers: Server[] = [];

  beforeAll(async () => {
    const model = await listen(stubModelApp([
      [1, 0],
      [0, 2],
    ]));
    const explain = await listen(createApp());
    servers.push(model.server, explain.server);
    modelUrl = model.url;
    explainUrl = explain.url;
  });

  afterAll(() => {
    for (const server of servers) server.close();
  });

  it("reports health", async () => {
    const response = await fetch(`${explainUrl}/health`);
    expect(response.status).toBe(200);
    const body = await response.json();
    expect(body.status).toBe("ok");
    expect(body.method).toBe(METHOD_NAME);
  });

  it("explains through a live model endpoint", async () => {
    const response = await fetch(`${explainUrl}/explain`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        image,
        model_endpoint: modelUrl,
        params: { window: 1, stride: 1, fill: 0, q: 0.5 },
      }),
    });
    expect(response.status).toBe(200);
    const body = await response.json();
    expect(body.saliency.scores[3]).toBe(1);
    expect(body.saliency.scores[0]).toBeCloseTo(0.5, 9);
    expect(body.mask.keep).toEqual([true, false, false, true]);
    expect(body.method.name).toBe(METHOD_NAME);
  });

  it("keeps every pixel at q = 1", async () => {
    const response = await fetch(`${explainUrl}/explain`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image, model_endpoint: modelUrl, params: { q: 1 } }),
    });
    const body = await response.json();
    expect(body.mask.keep.every(Boolean)).toBe(true);
  });

  it("rejects a malformed tensor with a schema error body", async () => {
    const response = await fetch(`${explainUrl}/explain`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        image: { height: 2, width: 2, channels: 1, pixels: [0.5] },
        model_endpoint: modelUrl,
      }),
    });
    expect(response.status).toBe(400);
    const body = await response.json();
    expect(body.error.code).toBe("schema_violation");
  });

  it("surfaces upstream model failures with the placement index", async () => {
    const response = await fetch(`${explainUrl}/explain`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        image,
        model_endpoint: "http://127.0.0.1:9",
        params: { window: 1, stride: 1 },
      }),
    });
    expect(response.status).toBe(502);
    const body = await response.json();
    expect(body.error.code).toBe("model_failure");
    expect(body.error.details.placement).toBeNull();
  });
});
