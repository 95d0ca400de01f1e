import {
  ApiError,
  Backend,
  ClassDef,
  HEX_COLOR,
  LabelPoint,
  SessionCreate,
  SessionInfo,
  SessionState,
} from "./types.js";

interface MockSession {
  info: SessionInfo;
  bbox: number[];
  year: number;
  pixelSize: number;
  classes: ClassDef[];
  points: LabelPoint[];
  k: number;
  trained: boolean;
}

/**
 * In-memory stand-in for the labeling service with the same validation and
 * status codes, used by the reconciliation tests.
 */
export class MockBackend implements Backend {
  private sessions = new Map<string, MockSession>();
  private counter = 0;

  constructor(
    private coverage: [number, number, number, number] = [0, 0, 1000, 1000],
    private pixelSize = 10,
  ) {}

  async createSession(body: SessionCreate): Promise<SessionInfo> {
    const [x0, y0, x1, y1] = body.bbox;
    if (!(x0 < x1 && y0 < y1)) throw new ApiError(400, "inverted bbox");
    const [cx0, cy0, cx1, cy1] = this.coverage;
    if (x1 <= cx0 || x0 >= cx1 || y1 <= cy0 || y0 >= cy1) {
      throw new ApiError(404, "no coverage");
    }
    for (const cls of body.classes) {
      if (!HEX_COLOR.test(cls.color)) throw new ApiError(422, "bad color");
    }
    const col0 = Math.floor(x0 / this.pixelSize);
    const col1 = Math.ceil(x1 / this.pixelSize);
    const row0 = Math.floor(y0 / this.pixelSize);
    const row1 = Math.ceil(y1 / this.pixelSize);
    const info: SessionInfo = {
      session_id: `mock-${this.counter++}`,
      width: col1 - col0,
      height: row1 - row0,
    };
    this.sessions.set(info.session_id, {
      info,
      bbox: [...body.bbox],
      year: body.year,
      pixelSize: this.pixelSize,
      classes: body.classes.map((c) => ({ ...c })),
      points: [],
      k: 5,
      trained: false,
    });
    return info;
  }

  private get(id: string): MockSession {
    const session = this.sessions.get(id);
    if (!session) throw new ApiError(404, "unknown session");
    return session;
  }

  async getSession(id: string): Promise<SessionState> {
    const s = this.get(id);
    return {
      session_id: s.info.session_id,
      bbox: [...s.bbox],
      year: s.year,
      width: s.info.width,
      height: s.info.height,
      classes: s.classes.map((c) => ({ ...c })),
      points: s.points.map((p) => ({ ...p })),
      k: s.k,
      trained: s.trained,
    };
  }

  async addClass(id: string, cls: ClassDef): Promise<ClassDef[]> {
    const s = this.get(id);
    if (!HEX_COLOR.test(cls.color)) throw new ApiError(422, "bad color");
    if (s.classes.some((c) => c.id === cls.id)) {
      throw new ApiError(409, "class id already defined");
    }
    s.classes.push({ ...cls });
    return s.classes.map((c) => ({ ...c }));
  }

  private inGrid(s: MockSession, x: number, y: number): boolean {
    const col0 = Math.floor(s.bbox[0] / s.pixelSize);
    const row0 = Math.floor(s.bbox[1] / s.pixelSize);
    const col = Math.floor(x / s.pixelSize) - col0;
    const row = Math.floor(y / s.pixelSize) - row0;
    return col >= 0 && col < s.info.width && row >= 0 && row < s.info.height;
  }

  async addLabel(id: string, point: LabelPoint): Promise<number> {
    const s = this.get(id);
    if (!s.classes.some((c) => c.id === point.class_id)) {
      throw new ApiError(422, "unknown class id");
    }
    if (!this.inGrid(s, point.x, point.y)) {
      throw new ApiError(422, "coordinates outside session region");
    }
    s.points.push({ ...point });
    return s.points.length;
  }

  async train(id: string, k: number): Promise<{ trained: boolean; n_points: number }> {
    const s = this.get(id);
    const labeled = new Set(s.points.map((p) => p.class_id));
    if (labeled.size < 2) throw new ApiError(409, "need 2 labeled classes");
    if (k > s.points.length) throw new ApiError(409, "k exceeds labels");
    s.k = k;
    s.trained = true;
    return { trained: true, n_points: s.points.length };
  }

  /** Server-side view of the fields the UI mirrors. */
  snapshot(id: string): object {
    const s = this.get(id);
    return {
      session_id: s.info.session_id,
      classes: s.classes.map((c) => ({ ...c })),
      points: s.points.map((p) => ({ ...p })),
      k: s.k,
      trained: s.trained,
    };
  }
}
