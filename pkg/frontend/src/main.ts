import { SessionApi } from "./api.js";
import { SessionController } from "./controller.js";
import { render, type Actions } from "./dom.js";

const POLL_MS = 1000;

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

// ?api=http://127.0.0.1:8642 points a page served elsewhere at the service
const apiBase =
  new URLSearchParams(window.location.search).get("api") ??
  window.location.origin;
const api = new SessionApi(apiBase);

const actions: Actions = {
  onNext: () => void controller.requestNext(),
  onLabel: (cls) => void controller.submitLabel(cls),
  onRetry: () => void controller.forceRefresh(),
};

const controller = new SessionController(
  api,
  (vm) => render(vm, root, actions),
  api.exportUrl(),
);

void controller.forceRefresh();
setInterval(() => void controller.refresh(), POLL_MS);
