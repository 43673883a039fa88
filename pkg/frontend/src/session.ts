/**
 * Editing session state, DOM-free so the full draw -> generate -> edit loop
 * is testable headlessly. The DOM layer only renders state and forwards
 * pointer events.
 */

import { GenerateResponse, ServiceClient } from "./api.js";
import { exportPngBase64 } from "./png.js";
import {
  CANVAS_PX,
  DEFAULT_THICKNESS,
  Point,
  Stroke,
  StrokeDocument,
  Tool,
  clampThickness,
  emptyDocument,
  exportTopoMap,
} from "./strokes.js";

export interface SessionListener {
  (session: EditorSession): void;
}

export class EditorSession {
  doc: StrokeDocument = emptyDocument(CANVAS_PX);
  tool: Tool = "levelset";
  thicknessPx: number = DEFAULT_THICKNESS.levelset;
  /** latest generation result; survives further edits until replaced */
  lastResult: GenerateResponse | null = null;
  lastError: string | null = null;
  generating = false;

  private active: Stroke | null = null;
  private inflight: AbortController | null = null;
  private listeners: SessionListener[] = [];

  constructor(readonly client: ServiceClient, readonly throughVae: boolean = true) {}

  onChange(listener: SessionListener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const l of this.listeners) l(this);
  }

  setTool(tool: Tool): void {
    this.tool = tool;
    if (tool !== "eraser") {
      this.thicknessPx = DEFAULT_THICKNESS[tool];
    }
    this.emit();
  }

  setThickness(px: number): void {
    this.thicknessPx = clampThickness(px);
    this.emit();
  }

  beginStroke(p: Point): void {
    this.active = { tool: this.tool, thicknessPx: this.thicknessPx, points: [p] };
  }

  extendStroke(p: Point): void {
    if (this.active) {
      this.active.points.push(p);
      this.emit();
    }
  }

  endStroke(): void {
    if (this.active && this.active.points.length >= 1) {
      this.doc.strokes.push(this.active);
    }
    this.active = null;
    this.emit();
  }

  /** Document including the stroke currently being drawn (for display). */
  displayDocument(): StrokeDocument {
    if (!this.active) return this.doc;
    return { canvasPx: this.doc.canvasPx, strokes: [...this.doc.strokes, this.active] };
  }

  undo(): void {
    this.doc.strokes.pop();
    this.emit();
  }

  clear(): void {
    this.doc = emptyDocument(this.doc.canvasPx);
    this.emit();
  }

  exportSketchB64(): string {
    return exportPngBase64(exportTopoMap(this.doc));
  }

  /**
   * Send the current sketch for generation. The canvas document is left
   * untouched; a click while a request is in flight aborts and replaces it.
   */
  async generate(): Promise<GenerateResponse | null> {
    if (this.inflight) {
      this.inflight.abort();
    }
    const controller = new AbortController();
    this.inflight = controller;
    this.generating = true;
    this.lastError = null;
    this.emit();
    try {
      const res = await this.client.generate(
        this.exportSketchB64(), this.throughVae, controller.signal,
      );
      if (this.inflight === controller) {
        this.lastResult = res;
      }
      return res;
    } catch (err) {
      if (controller.signal.aborted) return null; // replaced by a newer click
      this.lastError = err instanceof Error ? err.message : String(err);
      return null;
    } finally {
      if (this.inflight === controller) {
        this.inflight = null;
        this.generating = false;
      }
      this.emit();
    }
  }

  async variants(n: number, epsScale: number, seed: number): Promise<GenerateResponse[]> {
    return this.client.variants(this.exportSketchB64(), n, epsScale, seed);
  }

  async interpolate(pinnedSketchB64: string, gammas: number[]): Promise<GenerateResponse[]> {
    return this.client.interpolate(pinnedSketchB64, this.exportSketchB64(), gammas);
  }

  /** Files for the Save action: the sketch and the latest generated DEM. */
  saveBundle(): { sketchPngB64: string; demPngB64: string | null; hillshadePngB64: string | null } {
    return {
      sketchPngB64: this.exportSketchB64(),
      demPngB64: this.lastResult ? this.lastResult.dem_png16_b64 : null,
      hillshadePngB64: this.lastResult ? this.lastResult.hillshade_png_b64 : null,
    };
  }
}
