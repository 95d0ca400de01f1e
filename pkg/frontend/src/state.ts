import {
  Backend,
  ClassDef,
  LabelPoint,
  SessionCreate,
  SessionState,
} from "./types.js";

/**
 * Client-side session store. Every mutation goes through the backend first
 * and the local copy is updated only on success, so the store always mirrors
 * what the server has durably accepted.
 */
export class SessionStore {
  sessionId: string | null = null;
  width = 0;
  height = 0;
  bbox: number[] = [];
  year = 0;
  classes: ClassDef[] = [];
  points: LabelPoint[] = [];
  k = 5;
  trained = false;
  selectedClass: number | null = null;

  constructor(private backend: Backend) {}

  async create(body: SessionCreate): Promise<void> {
    const info = await this.backend.createSession(body);
    this.sessionId = info.session_id;
    this.width = info.width;
    this.height = info.height;
    this.bbox = [...body.bbox];
    this.year = body.year;
    this.classes = body.classes.map((c) => ({ ...c }));
    this.points = [];
    this.k = 5;
    this.trained = false;
    this.selectedClass = this.classes.length ? this.classes[0].id : null;
  }

  async load(sessionId: string): Promise<void> {
    this.applyServerState(await this.backend.getSession(sessionId));
  }

  /** Re-fetch authoritative state (e.g. after a rejected action). */
  async refresh(): Promise<void> {
    if (this.sessionId === null) throw new Error("no session");
    this.applyServerState(await this.backend.getSession(this.sessionId));
  }

  private applyServerState(state: SessionState): void {
    this.sessionId = state.session_id;
    this.width = state.width;
    this.height = state.height;
    this.bbox = [...state.bbox];
    this.year = state.year;
    this.classes = state.classes.map((c) => ({ ...c }));
    this.points = state.points.map((p) => ({ ...p }));
    this.k = state.k;
    this.trained = state.trained;
    if (
      this.selectedClass === null ||
      !this.classes.some((c) => c.id === this.selectedClass)
    ) {
      this.selectedClass = this.classes.length ? this.classes[0].id : null;
    }
  }

  async addClass(cls: ClassDef): Promise<void> {
    if (this.sessionId === null) throw new Error("no session");
    this.classes = (await this.backend.addClass(this.sessionId, cls)).map(
      (c) => ({ ...c }),
    );
    if (this.selectedClass === null) this.selectedClass = cls.id;
  }

  async addLabel(point: LabelPoint): Promise<void> {
    if (this.sessionId === null) throw new Error("no session");
    const count = await this.backend.addLabel(this.sessionId, point);
    this.points.push({ ...point });
    if (count !== this.points.length) {
      // another client wrote concurrently; resync
      await this.refresh();
    }
  }

  async train(k: number): Promise<void> {
    if (this.sessionId === null) throw new Error("no session");
    await this.backend.train(this.sessionId, k);
    this.k = k;
    this.trained = true;
  }

  classById(id: number): ClassDef | undefined {
    return this.classes.find((c) => c.id === id);
  }

  /** Map units -> integer pixel (col, row) on the session grid. */
  toPixel(x: number, y: number): [number, number] {
    const ps = (this.bbox[2] - this.bbox[0]) / this.width;
    return [
      Math.floor((x - this.bbox[0]) / ps),
      Math.floor((y - this.bbox[1]) / ps),
    ];
  }

  /** Everything the server also persists, for state reconciliation. */
  snapshot(): object {
    return {
      session_id: this.sessionId,
      classes: this.classes.map((c) => ({ ...c })),
      points: this.points.map((p) => ({ ...p })),
      k: this.k,
      trained: this.trained,
    };
  }

  /** Labeled points as a portable JSON document. */
  exportLabels(): string {
    return JSON.stringify(
      {
        session_id: this.sessionId,
        year: this.year,
        classes: this.classes,
        points: this.points,
      },
      null,
      1,
    );
  }
}
