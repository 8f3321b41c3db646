/** Payload shapes of the verification service API. */

export interface ModelInfo {
  name: string;
  streams: string[];
  lambda: number;
  tau: number;
  k: number;
}

export interface QueueEntry {
  trajectory: string;
  top_score: number;
  proposed: string;
  model: string;
  decided: boolean;
}

export interface StreamScores {
  cos: number;
  rank: number;
  rr: number;
  s: number;
}

export interface Candidate {
  trajectory: string;
  sample: string;
  score: number;
  breakdown: Record<string, StreamScores>;
  images: string[];
  query_sample?: string;
}

export interface RetrievePayload {
  query: string;
  model: string;
  query_images: string[];
  candidates: Candidate[];
}

export interface EvaluationSnapshot {
  model: string;
  map: number;
  ci: [number, number];
  n_queries: number;
  n_trajectories: number;
}

export type DecisionStatus = 'confirmed' | 'rejected' | 'unsure';

export interface DecisionInput {
  pair: { query: string; gallery: string };
  status: DecisionStatus;
  annotator: string;
}
