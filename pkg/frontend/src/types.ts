/** Shared request/response shapes of the labeling service REST API. */

export interface ClassDef {
  id: number;
  name: string;
  color: string; // "#rrggbb"
}

export interface LabelPoint {
  x: number;
  y: number;
  class_id: number;
}

export interface SessionCreate {
  bbox: [number, number, number, number];
  year: number;
  classes: ClassDef[];
}

export interface SessionInfo {
  session_id: string;
  width: number;
  height: number;
}

export interface SessionState {
  session_id: string;
  bbox: number[];
  year: number;
  width: number;
  height: number;
  classes: ClassDef[];
  points: LabelPoint[];
  k: number;
  trained: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/**
 * The subset of the service the UI talks to. Implemented over HTTP for the
 * real service and in-memory for tests.
 */
export interface Backend {
  createSession(body: SessionCreate): Promise<SessionInfo>;
  getSession(id: string): Promise<SessionState>;
  addClass(id: string, cls: ClassDef): Promise<ClassDef[]>;
  addLabel(id: string, point: LabelPoint): Promise<number>;
  train(id: string, k: number): Promise<{ trained: boolean; n_points: number }>;
}

export const HEX_COLOR = /^#[0-9a-fA-F]{6}$/;
