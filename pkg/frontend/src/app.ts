import { HttpBackend } from "./api.js";
import { SessionStore } from "./state.js";
import { ApiError, ClassDef } from "./types.js";

const PALETTE = [
  "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
  "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080",
];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function status(msg: string): void {
  el<HTMLDivElement>("status").textContent = msg;
}

export function startApp(): void {
  const backend = new HttpBackend("");
  const store = new SessionStore(backend);
  const canvas = el<HTMLCanvasElement>("view");
  const ctx = canvas.getContext("2d")!;
  const base = new Image();
  const overlay = new Image();
  let overlayVisible = false;

  function draw(): void {
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (base.complete && base.naturalWidth) {
      ctx.drawImage(base, 0, 0, canvas.width, canvas.height);
    }
    if (overlayVisible && overlay.complete && overlay.naturalWidth) {
      ctx.drawImage(overlay, 0, 0, canvas.width, canvas.height);
    }
    const sx = canvas.width / store.width;
    const sy = canvas.height / store.height;
    for (const p of store.points) {
      const [col, row] = store.toPixel(p.x, p.y);
      const cls = store.classById(p.class_id);
      ctx.fillStyle = cls ? cls.color : "#000000";
      ctx.strokeStyle = "#ffffff";
      ctx.beginPath();
      ctx.arc((col + 0.5) * sx, (row + 0.5) * sy, 5, 0, 2 * Math.PI);
      ctx.fill();
      ctx.stroke();
    }
  }

  function renderClasses(): void {
    const box = el<HTMLDivElement>("classes");
    box.innerHTML = "";
    for (const cls of store.classes) {
      const btn = document.createElement("button");
      btn.textContent = cls.name;
      btn.style.borderLeft = `12px solid ${cls.color}`;
      btn.className = store.selectedClass === cls.id ? "selected" : "";
      btn.onclick = () => {
        store.selectedClass = cls.id;
        renderClasses();
      };
      box.appendChild(btn);
    }
  }

  base.onload = draw;
  overlay.onload = draw;

  el<HTMLButtonElement>("create").onclick = async () => {
    const bbox = el<HTMLInputElement>("bbox").value.split(",").map(Number);
    const year = Number(el<HTMLInputElement>("year").value);
    const classes: ClassDef[] = [];
    try {
      await store.create({
        bbox: bbox as [number, number, number, number],
        year,
        classes,
      });
      base.src = backend.pcaUrl(store.sessionId!);
      overlayVisible = false;
      renderClasses();
      status(`session ${store.sessionId} (${store.width}x${store.height})`);
    } catch (err) {
      status(err instanceof ApiError ? `error ${err.status}: ${err.message}` : String(err));
    }
  };

  el<HTMLButtonElement>("addclass").onclick = async () => {
    const name = el<HTMLInputElement>("classname").value.trim();
    if (!name) return;
    const id = store.classes.length
      ? Math.max(...store.classes.map((c) => c.id)) + 1
      : 0;
    try {
      await store.addClass({ id, name, color: PALETTE[id % PALETTE.length] });
      store.selectedClass = id;
      renderClasses();
    } catch (err) {
      status(String(err));
    }
  };

  canvas.onclick = async (ev) => {
    if (store.sessionId === null || store.selectedClass === null) return;
    const rect = canvas.getBoundingClientRect();
    const col = ((ev.clientX - rect.left) / rect.width) * store.width;
    const row = ((ev.clientY - rect.top) / rect.height) * store.height;
    const ps = (store.bbox[2] - store.bbox[0]) / store.width;
    const x = store.bbox[0] + col * ps;
    const y = store.bbox[1] + row * ps;
    try {
      await store.addLabel({ x, y, class_id: store.selectedClass });
      draw();
      status(`${store.points.length} labels`);
    } catch (err) {
      status(String(err));
    }
  };

  el<HTMLButtonElement>("train").onclick = async () => {
    const k = Number(el<HTMLInputElement>("k").value) || 5;
    try {
      await store.train(k);
      overlay.src = backend.predictionUrl(store.sessionId!);
      overlayVisible = true;
      status(`trained on ${store.points.length} labels (k=${k})`);
    } catch (err) {
      status(err instanceof ApiError ? `error ${err.status}: ${err.message}` : String(err));
    }
  };

  el<HTMLButtonElement>("toggle").onclick = () => {
    overlayVisible = !overlayVisible;
    draw();
  };

  el<HTMLButtonElement>("export").onclick = () => {
    const blob = new Blob([store.exportLabels()], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = `labels_${store.sessionId}.json`;
    a.click();
    URL.revokeObjectURL(a.href);
  };
}

if (typeof document !== "undefined" && document.getElementById("view")) {
  startApp();
}
