/** Browser entry point: wire the model, canvas view and toolbar. */

import { HttpSceneApi } from "./api.js";
import { EditorSceneModel } from "./model.js";
import { defaultCamera, EditorView } from "./view.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const baseUrl = params.get("api") ?? "http://127.0.0.1:7878";

  const canvas = document.getElementById("viewport") as HTMLCanvasElement;
  const panel = document.getElementById("panel") as HTMLElement;
  const renderImg = document.getElementById("render") as HTMLImageElement;
  const depthImg = document.getElementById("depth") as HTMLImageElement;
  const status = document.getElementById("status") as HTMLElement;

  const model = new EditorSceneModel(new HttpSceneApi(baseUrl));
  const view = new EditorView(model, canvas, panel);

  const reload = async () => {
    try {
      await model.loadScene();
      status.textContent = `connected to ${baseUrl} (rev ${model.revision})`;
      if (!view.selectedId() && model.objectIds().length) {
        view.select(model.objectIds()[0]);
      }
      view.refreshPanel();
      view.draw();
    } catch (err) {
      status.textContent = `cannot reach ${baseUrl}: ${String(err)} — retry below`;
    }
  };

  (document.getElementById("reload") as HTMLButtonElement).onclick = () => void reload();

  (document.getElementById("render-btn") as HTMLButtonElement).onclick = async () => {
    const doc = await model.requestRender(defaultCamera());
    renderImg.src = `data:image/png;base64,${doc.rgb_png}`;
    depthImg.src = `data:image/png;base64,${doc.depth_png}`;
    status.textContent = `rendered at rev ${doc.revision}`;
  };

  (document.getElementById("optimize-btn") as HTMLButtonElement).onclick = async () => {
    // stream in small batches so badges and the sparkline update live
    for (let i = 0; i < 10; i++) {
      const cross = await model.runOptimize(5);
      view.refreshPanel();
      view.draw();
      status.textContent = `optimize: cross loss ${cross.toExponential(2)} (rev ${model.revision})`;
      if (cross < 1e-9) break;
    }
  };

  await reload();
}

void boot();
