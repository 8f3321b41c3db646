/** Client-side checks of the per-stream score breakdown. */

import type { Candidate, StreamScores } from './types.js';

export const SCORE_TOLERANCE = 1e-6;

/**
 * Recompute the fused score from the breakdown the server sent:
 * lambda * sum(rr) + (1 - lambda) * sum(s). Rendering this value (rather
 * than trusting the payload's score field) cross-checks the wire format.
 */
export function recomputeFusedScore(
  breakdown: Record<string, StreamScores>,
  lambda: number,
): number {
  let rrSum = 0;
  let sSum = 0;
  for (const scores of Object.values(breakdown)) {
    rrSum += scores.rr;
    sSum += scores.s;
  }
  return lambda * rrSum + (1 - lambda) * sSum;
}

export interface CandidateCheck {
  fusedScore: number;
  scoreMismatch: boolean;
  missingStreams: string[];
  extraStreams: string[];
}

/** Validate one candidate against the session's configured stream set. */
export function checkCandidate(
  candidate: Candidate,
  sessionStreams: string[],
  lambda: number,
): CandidateCheck {
  const fusedScore = recomputeFusedScore(candidate.breakdown, lambda);
  const present = Object.keys(candidate.breakdown);
  return {
    fusedScore,
    scoreMismatch: Math.abs(fusedScore - candidate.score) > SCORE_TOLERANCE,
    missingStreams: sessionStreams.filter((s) => !present.includes(s)),
    extraStreams: present.filter((s) => !sessionStreams.includes(s)),
  };
}

/** Bar widths in [0, 1] for the per-stream evidence display. */
export function scoreBars(scores: StreamScores, k: number): { rr: number; s: number } {
  return {
    rr: Math.min(1, scores.rr * (k + 1)), // rank 1 fills the bar
    s: Math.min(1, Math.max(0, scores.s)),
  };
}
