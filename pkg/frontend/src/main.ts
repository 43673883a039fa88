/** DOM wiring for the sketch canvas, toolbar, and result panels. */

import { ServiceClient } from "./api.js";
import { EditorSession } from "./session.js";
import { CANVAS_PX, Tool, renderCanvas } from "./strokes.js";

const SERVICE_URL =
  new URLSearchParams(window.location.search).get("service") ??
  "http://127.0.0.1:8765";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function pngSrc(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

function download(name: string, b64: string): void {
  const a = document.createElement("a");
  a.href = pngSrc(b64);
  a.download = name;
  a.click();
}

function main(): void {
  const client = new ServiceClient(SERVICE_URL);
  const session = new EditorSession(client, true);

  const canvas = el<HTMLCanvasElement>("sketch-canvas");
  canvas.width = CANVAS_PX;
  canvas.height = CANVAS_PX;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2D canvas unsupported");

  const hillshade = el<HTMLImageElement>("hillshade");
  const statusDot = el<HTMLSpanElement>("service-status");
  const banner = el<HTMLDivElement>("error-banner");
  const thicknessInput = el<HTMLInputElement>("thickness");
  const thicknessLabel = el<HTMLSpanElement>("thickness-label");
  const variantsRow = el<HTMLDivElement>("variants-row");
  const interpRow = el<HTMLDivElement>("interp-row");

  const redraw = () => {
    const img = renderCanvas(session.displayDocument());
    ctx.putImageData(new ImageData(img.data, img.width, img.height), 0, 0);
  };

  session.onChange(() => {
    redraw();
    thicknessInput.value = String(session.thicknessPx);
    thicknessLabel.textContent = `${session.thicknessPx}px`;
    if (session.lastResult) {
      hillshade.src = pngSrc(session.lastResult.hillshade_png_b64);
    }
    banner.textContent = session.lastError ?? "";
    banner.style.display = session.lastError ? "block" : "none";
    el<HTMLButtonElement>("btn-generate").disabled = session.generating;
    for (const tool of ["ridge", "valley", "levelset", "eraser"] as Tool[]) {
      el<HTMLButtonElement>(`tool-${tool}`).classList.toggle(
        "active", session.tool === tool,
      );
    }
  });

  // pointer events map 1:1 to canvas pixels (canvas is displayed at size)
  const toCanvas = (ev: PointerEvent) => {
    const rect = canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - rect.left) / rect.width) * CANVAS_PX,
      y: ((ev.clientY - rect.top) / rect.height) * CANVAS_PX,
    };
  };
  let drawing = false;
  canvas.addEventListener("pointerdown", (ev) => {
    drawing = true;
    canvas.setPointerCapture(ev.pointerId);
    session.beginStroke(toCanvas(ev));
    redraw();
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (drawing) session.extendStroke(toCanvas(ev));
  });
  const finish = () => {
    if (drawing) {
      drawing = false;
      session.endStroke();
    }
  };
  canvas.addEventListener("pointerup", finish);
  canvas.addEventListener("pointercancel", finish);

  for (const tool of ["ridge", "valley", "levelset", "eraser"] as Tool[]) {
    el<HTMLButtonElement>(`tool-${tool}`).addEventListener("click", () =>
      session.setTool(tool),
    );
  }
  thicknessInput.addEventListener("input", () =>
    session.setThickness(Number(thicknessInput.value)),
  );

  el<HTMLButtonElement>("btn-generate").addEventListener("click", () => {
    void session.generate();
  });
  el<HTMLButtonElement>("btn-undo").addEventListener("click", () => session.undo());
  el<HTMLButtonElement>("btn-clear").addEventListener("click", () => {
    if (window.confirm("Clear the whole sketch?")) session.clear();
  });
  el<HTMLButtonElement>("btn-save").addEventListener("click", () => {
    const bundle = session.saveBundle();
    download("sketch.png", bundle.sketchPngB64);
    if (bundle.demPngB64) download("terrain_dem.png", bundle.demPngB64);
    if (bundle.hillshadePngB64) download("terrain_hillshade.png", bundle.hillshadePngB64);
  });

  el<HTMLButtonElement>("btn-variants").addEventListener("click", async () => {
    const eps = Number(el<HTMLInputElement>("eps-scale").value);
    const seed = Math.floor(Math.random() * 1e6);
    try {
      const results = await session.variants(4, eps, seed);
      variantsRow.replaceChildren(
        ...results.map((r) => {
          const img = document.createElement("img");
          img.src = pngSrc(r.hillshade_png_b64);
          img.className = "thumb";
          return img;
        }),
      );
    } catch (err) {
      session.lastError = err instanceof Error ? err.message : String(err);
    }
  });

  let pinned: string | null = null;
  el<HTMLButtonElement>("btn-pin").addEventListener("click", () => {
    pinned = session.exportSketchB64();
    el<HTMLSpanElement>("pin-state").textContent = "pinned";
  });
  el<HTMLButtonElement>("btn-interpolate").addEventListener("click", async () => {
    if (!pinned) {
      session.lastError = "pin a sketch first";
      return;
    }
    try {
      const results = await session.interpolate(pinned, [0.167, 0.334, 0.501, 0.668, 0.835]);
      interpRow.replaceChildren(
        ...results.map((r) => {
          const img = document.createElement("img");
          img.src = pngSrc(r.hillshade_png_b64);
          img.className = "thumb";
          return img;
        }),
      );
    } catch (err) {
      session.lastError = err instanceof Error ? err.message : String(err);
    }
  });

  const pollHealth = async () => {
    try {
      const health = await client.health();
      statusDot.className = health.status === "ready" ? "dot ready" : "dot loading";
      statusDot.title = health.status;
    } catch {
      statusDot.className = "dot down";
      statusDot.title = "service unreachable";
    }
  };
  void pollHealth();
  window.setInterval(() => void pollHealth(), 5000);

  redraw();
}

main();
