// Render layer: ViewModel in, DOM out.  Rebuilt wholesale on every emit;
// at one annotator and a handful of clusters there is nothing to optimize.

import type { ViewModel } from "./types.js";

export interface Actions {
  onNext(): void;
  onLabel(cls: string): void;
  onRetry(): void;
}

function esc(text: string): string {
  const div = document.createElement("div");
  div.textContent = text;
  return div.innerHTML;
}

function scoreBar(name: string, value: number): string {
  const width = Math.round(Math.min(Math.abs(value), 1) * 100);
  return `<div class="score"><span class="score-name">${name}</span>
    <div class="bar"><div class="fill" style="width:${width}%"></div></div>
    <span class="score-value">${value.toFixed(4)}</span></div>`;
}

export function render(vm: ViewModel, root: HTMLElement, actions: Actions): void {
  const parts: string[] = [];

  if (!vm.connected) {
    parts.push(`<div class="banner">service unreachable
      <button id="retry">retry</button></div>`);
  }

  const st = vm.state;
  if (vm.phase === "loading" || !st) {
    parts.push(`<p class="muted">waiting for the session service…</p>`);
    root.innerHTML = parts.join("\n");
    bind(root, actions);
    return;
  }

  parts.push(`<header>
    <h1>annotate</h1>
    <span class="strategy">${esc(st.strategy)}</span>
    <span class="progress">${st.labeled_count} / ${st.budget} labeled,
      ${st.remaining_budget} left</span>
  </header>`);

  if (vm.phase === "complete") {
    parts.push(`<section class="complete">
      <h2>session complete</h2>
      <p>${st.labeled_count} labels collected, ${st.verbalizers.length}
        verbalizer tokens acquired.</p>
      <a href="${esc(vm.exportHref)}" download="session.json">download session export</a>
    </section>`);
  } else if (vm.card) {
    const c = vm.card;
    const buttons = st.label_space
      .map(
        (cls) =>
          `<button class="label" data-class="${esc(cls)}"
             ${vm.busy ? "disabled" : ""}>${esc(cls)}</button>`,
      )
      .join("");
    parts.push(`<section class="card" data-instance="${esc(c.instance_id)}">
      <p class="text">${esc(c.text || c.instance_id)}</p>
      <p class="meta">instance ${esc(c.instance_id)}, cluster ${c.cluster_id}</p>
      ${scoreBar("cohesion", c.cluster_scores.cohesion)}
      ${scoreBar("separation", c.cluster_scores.separation)}
      ${scoreBar("impurity", c.cluster_scores.impurity)}
      <div class="labels">${buttons}</div>
      ${vm.inlineError ? `<p class="error">${esc(vm.inlineError)}</p>` : ""}
    </section>`);
  } else {
    parts.push(`<section class="idle">
      <button id="next" ${vm.busy ? "disabled" : ""}>next instance</button>
    </section>`);
  }

  const chips = st.verbalizers
    .map((v) => `<span class="chip">${esc(v.class)}: ${esc(v.token_id)}</span>`)
    .join("");
  parts.push(`<section class="verbalizers">${chips || '<span class="muted">no verbalizers yet</span>'}</section>`);

  const rows = st.cluster_summary
    .map(
      (r) => `<tr><td>${r.cluster_id}</td><td>${r.instance_count}</td>
        <td>${r.token_count}</td><td>${r.labeled_count}</td>
        <td>${r.last_score === null ? "—" : r.last_score.toFixed(4)}</td></tr>`,
    )
    .join("");
  parts.push(`<section class="clusters"><table>
    <thead><tr><th>cluster</th><th>instances</th><th>tokens</th>
      <th>labeled</th><th>last score</th></tr></thead>
    <tbody>${rows}</tbody></table></section>`);

  const toasts = vm.toasts
    .map((t) => `<div class="toast ${t.kind}">${esc(t.text)}</div>`)
    .join("");
  parts.push(`<div class="toasts">${toasts}</div>`);

  root.innerHTML = parts.join("\n");
  bind(root, actions);
}

function bind(root: HTMLElement, actions: Actions): void {
  root.querySelector<HTMLButtonElement>("#next")?.addEventListener("click", actions.onNext);
  root.querySelector<HTMLButtonElement>("#retry")?.addEventListener("click", actions.onRetry);
  for (const btn of root.querySelectorAll<HTMLButtonElement>("button.label")) {
    btn.addEventListener("click", () => actions.onLabel(btn.dataset.class ?? ""));
  }
}
