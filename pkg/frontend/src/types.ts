/** Wire types for the experiment service API. Money is a fixed-precision
 * decimal string (e.g. "-12.50"); probabilities are plain numbers and are
 * absent when the server hides them for an ambiguous option. */

export interface OutcomeDescriptor {
  payoff: string;
  probability?: number;
}

export interface OptionDescriptor {
  gamble: "A" | "B";
  outcomes: OutcomeDescriptor[];
  probabilities_hidden: boolean;
}

export interface TrialDescriptor {
  done: false;
  problem_id: string;
  condition: "feedback" | "no_feedback";
  trial_index: number;
  trials_total: number;
  trial_in_problem: number;
  trials_per_problem: number;
  left: OptionDescriptor;
  right: OptionDescriptor;
  cumulative_reward: string;
}

export interface SessionDone {
  done: true;
  status: string;
  cumulative_reward: string;
}

export type NextResponse = TrialDescriptor | SessionDone;

export interface SessionCreated {
  session_id: string;
  participant_id: string;
  n_problems: number;
  trials_per_problem: number;
  trials_total: number;
}

export interface ChoiceOutcome {
  problem_id: string;
  trial_index: number;
  obtained: string;
  forgone?: string;
  cumulative_reward: string;
  problem_exhausted: boolean;
  session_complete: boolean;
}

export interface FinalizeResponse {
  status: string;
  same_side_fraction?: number;
  cumulative_reward: string;
}

export type Side = "left" | "right";
