/** HTTP client for the local inference service. */

export interface GenerateResponse {
  dem_png16_b64: string;
  sidecar: { h_min: number; h_max: number; pixel_size_m?: number };
  hillshade_png_b64: string;
  latency_ms: number;
}

export interface HealthResponse {
  status: "loading" | "ready";
  checkpoints: Record<string, string>;
}

export class ServiceError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`service error ${status}: ${detail}`);
  }
}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async post<T>(path: string, body: unknown, signal?: AbortSignal): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const parsed = (await res.json()) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ServiceError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  async health(): Promise<HealthResponse> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/health`);
    if (!res.ok) throw new ServiceError(res.status, res.statusText);
    return (await res.json()) as HealthResponse;
  }

  generate(sketchPngB64: string, throughVae: boolean, signal?: AbortSignal): Promise<GenerateResponse> {
    return this.post("/api/generate", {
      sketch_png_b64: sketchPngB64,
      through_vae: throughVae,
    }, signal);
  }

  variants(sketchPngB64: string, n: number, epsScale: number, seed: number,
           signal?: AbortSignal): Promise<GenerateResponse[]> {
    return this.post("/api/variants", {
      sketch_png_b64: sketchPngB64,
      n,
      eps_scale: epsScale,
      seed,
    }, signal);
  }

  interpolate(sketchAB64: string, sketchBB64: string, gammas: number[],
              signal?: AbortSignal): Promise<GenerateResponse[]> {
    return this.post("/api/interpolate", {
      sketch_a_b64: sketchAB64,
      sketch_b_b64: sketchBB64,
      gammas,
    }, signal);
  }
}
