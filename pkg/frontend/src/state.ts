/** Session state machine.
 *
 * One active request at a time: choices are accepted only in the
 * awaiting_choice state, so repeated clicks while a submission is in flight
 * cannot produce duplicate trials. The server is the source of truth; after a
 * network failure the machine returns to awaiting_choice with the same trial
 * so the participant can retry.
 */

import type { ServiceClient } from "./api.js";
import type { ChoiceOutcome, FinalizeResponse, Side, TrialDescriptor } from "./types.js";

export type Phase = "idle" | "awaiting_choice" | "awaiting_server" | "showing_feedback" | "done";

export interface MachineSnapshot {
  phase: Phase;
  trial: TrialDescriptor | null;
  lastOutcome: ChoiceOutcome | null;
  final: FinalizeResponse | null;
  acknowledgedTrials: number;
  /** 1-based counter to display: acknowledged submissions + 1 */
  displayedTrialNumber: number;
  error: string | null;
  sessionId: string | null;
}

export class SessionMachine {
  private phase: Phase = "idle";
  private trial: TrialDescriptor | null = null;
  private lastOutcome: ChoiceOutcome | null = null;
  private final: FinalizeResponse | null = null;
  private acknowledged = 0;
  private error: string | null = null;
  private sessionId: string | null = null;
  private finalized = false;
  private listeners: Array<(s: MachineSnapshot) => void> = [];

  constructor(private client: ServiceClient) {}

  onChange(fn: (s: MachineSnapshot) => void): void {
    this.listeners.push(fn);
  }

  snapshot(): MachineSnapshot {
    return {
      phase: this.phase,
      trial: this.trial,
      lastOutcome: this.lastOutcome,
      final: this.final,
      acknowledgedTrials: this.acknowledged,
      displayedTrialNumber: this.acknowledged + 1,
      error: this.error,
      sessionId: this.sessionId,
    };
  }

  private emit(): void {
    const snap = this.snapshot();
    for (const fn of this.listeners) fn(snap);
  }

  /** Create a session (or resume one by id) and load the first trial. */
  async start(participantId: string, resumeSessionId?: string): Promise<void> {
    if (this.phase !== "idle") return;
    this.phase = "awaiting_server";
    this.emit();
    try {
      if (resumeSessionId) {
        this.sessionId = resumeSessionId;
      } else {
        const created = await this.client.createSession(participantId);
        this.sessionId = created.session_id;
      }
      await this.advance();
    } catch (err) {
      this.error = String(err);
      this.phase = "idle";
      this.emit();
    }
  }

  /** Fetch the next trial, finalizing exactly once when none remain. */
  private async advance(): Promise<void> {
    const next = await this.client.nextTrial(this.sessionId!);
    if (next.done) {
      if (!this.finalized && next.status === "awaiting_finalize") {
        this.finalized = true;
        this.final = await this.client.finalize(this.sessionId!);
      } else if (this.final === null) {
        this.final = { status: next.status, cumulative_reward: next.cumulative_reward };
      }
      this.trial = null;
      this.phase = "done";
    } else {
      this.trial = next;
      this.phase = "awaiting_choice";
    }
    this.error = null;
    this.emit();
  }

  /** Submit the gamble shown on the given side. Ignored unless a choice is
   * currently allowed, which makes double-clicks harmless. */
  async choose(side: Side): Promise<void> {
    if (this.phase !== "awaiting_choice" || this.trial === null) return;
    const trial = this.trial;
    const gamble = trial[side].gamble;
    this.phase = "awaiting_server";
    this.emit();
    try {
      this.lastOutcome = await this.client.submitChoice(this.sessionId!, trial.problem_id, gamble);
      this.acknowledged += 1;
      this.phase = "showing_feedback";
      this.error = null;
    } catch (err) {
      // server state unchanged on network failure: offer a retry of the same trial
      this.error = String(err);
      this.phase = "awaiting_choice";
    }
    this.emit();
  }

  /** Leave the feedback panel and move to the next trial (or finish). */
  async continueSession(): Promise<void> {
    if (this.phase !== "showing_feedback") return;
    this.phase = "awaiting_server";
    this.emit();
    try {
      await this.advance();
    } catch (err) {
      this.error = String(err);
      this.phase = "showing_feedback";
      this.emit();
    }
  }
}
