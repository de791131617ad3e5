/** Review UI: a queue of augmented candidates with overlay inspection and
 * keyboard-driven accept/reject. Two views (queue, detail), no router.
 *
 * Keys in the detail view: A accept, R reject, O toggle overlay,
 * ArrowRight/ArrowLeft next/prev pending, Escape back to the queue. */

import { ApiError, Candidate, createApi, flagBadges } from "./api.js";
import { ReviewQueue } from "./state.js";

const api = createApi("");
const app = document.getElementById("app") as HTMLElement;

let queue: ReviewQueue | null = null;
let view: "queue" | "detail" = "queue";
let overlayOn = true;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "class") node.className = v;
    else node.setAttribute(k, v);
  }
  for (const c of children) node.append(c);
  return node;
}

function toast(message: string): void {
  const t = el("div", { class: "toast" }, [message]);
  document.body.append(t);
  setTimeout(() => t.remove(), 2600);
}

async function loadQueue(): Promise<void> {
  try {
    const candidates = await api.fetchCandidates("all");
    queue = new ReviewQueue(candidates);
    render();
  } catch (err) {
    renderError(err);
  }
}

function renderError(err: unknown): void {
  const message = err instanceof Error ? err.message : String(err);
  app.replaceChildren(
    el("div", { class: "banner error" }, [
      `Cannot reach the review server: ${message} `,
      el("button", { class: "retry" }, ["Retry"]),
    ]),
  );
  (app.querySelector(".retry") as HTMLButtonElement).onclick = () => void loadQueue();
}

function render(): void {
  if (!queue) return;
  if (view === "detail" && queue.current()) renderDetail();
  else renderQueue();
}

function renderQueue(): void {
  if (!queue) return;
  view = "queue";
  const counts = queue.counts();
  const header = el("header", {}, [
    el("h1", {}, ["Augmentation review"]),
    el("span", { class: "counts" }, [
      `${counts.pending} pending / ${counts.accepted} accepted / ${counts.rejected} rejected`,
    ]),
  ]);
  if (queue.isDone()) {
    void renderDoneScreen(header);
    return;
  }
  const cards = queue.pending().map((c) => candidateCard(c));
  app.replaceChildren(header, el("div", { class: "grid" }, cards));
}

function candidateCard(c: Candidate): HTMLElement {
  const badges = flagBadges(c.flags).map((b) => el("span", { class: "badge" }, [b]));
  const card = el("div", { class: c.flags.overall === "flagged" ? "card flagged" : "card" }, [
    el("img", { src: api.imageUrl(c.id, false), loading: "lazy", alt: c.stem }),
    el("div", { class: "card-meta" }, [
      el("strong", {}, [`#${c.id} ${c.stem} v${c.variant}`]),
      el("div", { class: "badges" }, badges),
    ]),
  ]);
  card.onclick = () => {
    queue?.select(c.id);
    view = "detail";
    render();
  };
  return card;
}

async function renderDoneScreen(header: HTMLElement): Promise<void> {
  try {
    const summary = await api.fetchExport();
    app.replaceChildren(
      header,
      el("div", { class: "done" }, [
        el("h2", {}, ["Queue empty"]),
        el("p", {}, [
          `${summary.accepted.length} accepted, ${summary.rejected.length} rejected, ${summary.pending} pending.`,
        ]),
        el("p", {}, ["Materialize the curated set with: docwarp validate --manifest <manifest> --export-accepted <dir>"]),
      ]),
    );
  } catch (err) {
    renderError(err);
  }
}

function renderDetail(): void {
  if (!queue) return;
  const c = queue.current();
  if (!c) {
    renderQueue();
    return;
  }
  view = "detail";
  const badges = flagBadges(c.flags).map((b) => el("span", { class: "badge" }, [b]));
  const img = el("img", {
    class: "detail-img",
    src: api.imageUrl(c.id, overlayOn),
    alt: c.stem,
  });
  const overlayBtn = el("button", {}, [overlayOn ? "Overlay: on (O)" : "Overlay: off (O)"]);
  overlayBtn.onclick = () => {
    overlayOn = !overlayOn;
    renderDetail();
  };
  const accept = el("button", { class: "accept" }, ["Accept (A)"]);
  accept.onclick = () => void submitVerdict("accepted");
  const reject = el("button", { class: "reject" }, ["Reject (R)"]);
  reject.onclick = () => void submitVerdict("rejected");
  const back = el("button", {}, ["Queue (Esc)"]);
  back.onclick = () => {
    view = "queue";
    render();
  };
  app.replaceChildren(
    el("header", {}, [
      el("h1", {}, [`#${c.id} ${c.stem} v${c.variant}`]),
      el("div", { class: "badges" }, badges),
    ]),
    el("div", { class: "detail" }, [
      img,
      el("div", { class: "controls" }, [accept, reject, overlayBtn, back]),
    ]),
  );
}

async function submitVerdict(decision: "accepted" | "rejected"): Promise<void> {
  if (!queue) return;
  const c = queue.current();
  if (!c) return;
  try {
    await api.postVerdict(c.id, decision);
  } catch (err) {
    // no optimistic state: the queue only moves on a confirmed write
    const detail = err instanceof ApiError ? `${err.status}: ${err.message}` : String(err);
    toast(`Verdict failed (${detail})`);
    return;
  }
  const next = queue.recordVerdict(c.id, decision);
  if (next === null) {
    view = "queue";
  }
  render();
}

document.addEventListener("keydown", (ev) => {
  if (!queue) return;
  if (view !== "detail") {
    if (ev.key === "Enter" && queue.current()) {
      view = "detail";
      render();
    }
    return;
  }
  switch (ev.key) {
    case "a":
    case "A":
      void submitVerdict("accepted");
      break;
    case "r":
    case "R":
      void submitVerdict("rejected");
      break;
    case "o":
    case "O":
      overlayOn = !overlayOn;
      renderDetail();
      break;
    case "ArrowRight":
      queue.advance(1);
      renderDetail();
      break;
    case "ArrowLeft":
      queue.advance(-1);
      renderDetail();
      break;
    case "Escape":
      view = "queue";
      render();
      break;
  }
});

void loadQueue();
