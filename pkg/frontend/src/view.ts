/** Pure rendering helpers: descriptors in, display strings out. Nothing here
 * invents or transforms a number beyond formatting. */

import type { ChoiceOutcome, OptionDescriptor, TrialDescriptor } from "./types.js";

/** Sanity-check a trial descriptor; returns a human-readable problem or null.
 * The page disables both choices and shows the message when this fails. */
export function descriptorError(trial: TrialDescriptor): string | null {
  for (const side of ["left", "right"] as const) {
    const option = trial[side];
    if (!option || !Array.isArray(option.outcomes) || option.outcomes.length === 0) {
      return `malformed ${side} option`;
    }
    for (const o of option.outcomes) {
      if (typeof o.payoff !== "string" || !/^-?\d+\.\d{2}$/.test(o.payoff)) {
        return `malformed payoff in ${side} option`;
      }
      if (!option.probabilities_hidden && typeof o.probability !== "number") {
        return `missing probability in ${side} option`;
      }
    }
  }
  return null;
}

export function formatProbability(p: number): string {
  const pct = p * 100;
  const rounded = Math.round(pct * 100) / 100;
  return `${rounded}%`;
}

/** One line per outcome: "12.00 with 50%", or "12.00 with ?" when the server
 * hides the option's probabilities. */
export function optionCardLines(option: OptionDescriptor): string[] {
  return option.outcomes.map((o) => {
    const prob = o.probability === undefined ? "?" : formatProbability(o.probability);
    return `${o.payoff} with ${prob}`;
  });
}

export interface FeedbackView {
  obtained: string;
  forgone: string | null;
}

/** Feedback panel content: the forgone payoff appears only when the server
 * sent one (feedback-condition trials). */
export function feedbackView(outcome: ChoiceOutcome): FeedbackView {
  return {
    obtained: `You won ${outcome.obtained}`,
    forgone: outcome.forgone === undefined ? null : `The other option paid ${outcome.forgone}`,
  };
}

export function trialHeader(trial: TrialDescriptor, displayedTrialNumber: number): string {
  return `Trial ${displayedTrialNumber} of ${trial.trials_total}`;
}

export function rewardHeader(cumulative: string): string {
  return `Total winnings: ${cumulative}`;
}
