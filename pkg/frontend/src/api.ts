import {
  ApiError,
  Backend,
  ClassDef,
  LabelPoint,
  SessionCreate,
  SessionInfo,
  SessionState,
} from "./types.js";

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const res = await fetch(url, init);
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

function post(body: unknown): RequestInit {
  return {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  };
}

/** HTTP client for the labeling service. */
export class HttpBackend implements Backend {
  constructor(private base: string = "") {}

  createSession(body: SessionCreate): Promise<SessionInfo> {
    return request<SessionInfo>(`${this.base}/sessions`, post(body));
  }

  getSession(id: string): Promise<SessionState> {
    return request<SessionState>(`${this.base}/sessions/${id}`);
  }

  async addClass(id: string, cls: ClassDef): Promise<ClassDef[]> {
    const out = await request<{ classes: ClassDef[] }>(
      `${this.base}/sessions/${id}/classes`,
      post(cls),
    );
    return out.classes;
  }

  async addLabel(id: string, point: LabelPoint): Promise<number> {
    const out = await request<{ count: number }>(
      `${this.base}/sessions/${id}/labels`,
      post(point),
    );
    return out.count;
  }

  train(id: string, k: number): Promise<{ trained: boolean; n_points: number }> {
    return request(`${this.base}/sessions/${id}/train`, post({ k }));
  }

  pcaUrl(id: string): string {
    return `${this.base}/sessions/${id}/pca.png`;
  }

  predictionUrl(id: string): string {
    // cache-bust so retraining refreshes the overlay
    return `${this.base}/sessions/${id}/prediction.png?t=${Date.now()}`;
  }
}
