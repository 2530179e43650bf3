import { createApp } from "./server";

const port = Number(process.env.PORT ?? 8800);
const host = process.env.HOST ?? "127.0.0.1";

createApp().listen(port, host, () => {
  console.log(`occlusion explanation service listening on http://${host}:${port}`);
});
