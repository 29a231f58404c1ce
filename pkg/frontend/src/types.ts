// Wire types, mirroring the session service's JSON responses field for field.

export interface ClusterScores {
  cohesion: number;
  separation: number;
  impurity: number;
}

export interface PendingCard {
  instance_id: string;
  text: string;
  cluster_id: number;
  cluster_scores: ClusterScores;
}

export interface NextCard extends PendingCard {
  state_version: number;
}

export interface VerbalizerEntry {
  token_id: string;
  class: string;
  acquired_at: number;
}

export interface ClusterRow {
  cluster_id: number;
  size: number;
  token_count: number;
  instance_count: number;
  labeled_count: number;
  last_score: number | null;
}

export interface WireState {
  state_version: number;
  strategy: string;
  timestamp: number;
  remaining_budget: number;
  budget: number;
  label_space: string[];
  pending: PendingCard | null;
  labeled_count: number;
  labeled: Record<string, string>;
  verbalizers: VerbalizerEntry[];
  cluster_summary: ClusterRow[];
  done: boolean;
}

export interface Toast {
  kind: "token" | "no-token" | "error";
  text: string;
}

// Everything the page renders; the render layer derives nothing on its own.
export interface ViewModel {
  phase: "loading" | "active" | "complete";
  connected: boolean;
  state: WireState | null;
  card: PendingCard | null;
  busy: boolean;
  inlineError: string | null;
  toasts: Toast[];
  exportHref: string;
}
