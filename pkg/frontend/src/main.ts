/** Browser entry: binds the state machine to the two-card layout.
 *
 * The session id is kept in the URL (?session=...) so a reload resumes the
 * same session; the server remains the source of truth for all state.
 */

import { ServiceClient } from "./api.js";
import { SessionMachine, type MachineSnapshot } from "./state.js";
import { descriptorError, feedbackView, optionCardLines, rewardHeader, trialHeader } from "./view.js";

const FEEDBACK_DISPLAY_MS = 500;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function renderCard(card: HTMLElement, lines: string[]): void {
  card.innerHTML = "";
  for (const line of lines) {
    const row = document.createElement("div");
    row.className = "outcome";
    row.textContent = line;
    card.appendChild(row);
  }
}

function render(snap: MachineSnapshot): void {
  const reward = el("reward");
  const status = el("status");
  const left = el("left-card");
  const right = el("right-card");
  const feedback = el("feedback");
  const buttons = [el("choose-left"), el("choose-right")] as HTMLButtonElement[];

  const busy = snap.phase === "awaiting_server" || snap.phase === "showing_feedback";
  for (const b of buttons) b.disabled = busy || snap.phase !== "awaiting_choice";

  if (snap.error) {
    status.textContent = `Connection problem: ${snap.error}. Your progress is saved; try again.`;
  }

  if (snap.phase === "awaiting_choice" && snap.trial) {
    const malformed = descriptorError(snap.trial);
    if (malformed) {
      status.textContent = `Problem with this trial (${malformed}); please contact the experimenter.`;
      for (const b of buttons) b.disabled = true;
      return;
    }
    status.textContent = trialHeader(snap.trial, snap.displayedTrialNumber);
    reward.textContent = rewardHeader(snap.trial.cumulative_reward);
    renderCard(left, optionCardLines(snap.trial.left));
    renderCard(right, optionCardLines(snap.trial.right));
    feedback.hidden = true;
  } else if (snap.phase === "showing_feedback" && snap.lastOutcome) {
    const view = feedbackView(snap.lastOutcome);
    feedback.hidden = false;
    feedback.textContent = view.forgone ? `${view.obtained} — ${view.forgone}` : view.obtained;
    reward.textContent = rewardHeader(snap.lastOutcome.cumulative_reward);
  } else if (snap.phase === "done" && snap.final) {
    status.textContent = `Session ${snap.final.status}.`;
    reward.textContent = rewardHeader(snap.final.cumulative_reward);
    feedback.hidden = true;
    renderCard(left, []);
    renderCard(right, []);
  }
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const base = params.get("service") ?? "";
  const client = new ServiceClient(base);
  const machine = new SessionMachine(client);

  machine.onChange(render);
  machine.onChange((snap) => {
    if (snap.sessionId && params.get("session") !== snap.sessionId) {
      params.set("session", snap.sessionId);
      history.replaceState(null, "", `?${params.toString()}`);
    }
    if (snap.phase === "showing_feedback") {
      window.setTimeout(() => void machine.continueSession(), FEEDBACK_DISPLAY_MS);
    }
  });

  el("choose-left").addEventListener("click", () => void machine.choose("left"));
  el("choose-right").addEventListener("click", () => void machine.choose("right"));

  const participant = params.get("participant") ?? `anon-${Date.now()}`;
  await machine.start(participant, params.get("session") ?? undefined);
}

void boot();
