// Chat application: session loop, message list, Go On control, question box.
//
// Exactly one blocking widget may be pending at a time; while it is, the
// Go On control is disabled and the message pump waits. Events carry unique
// client ids and duplicate acks never render twice.

import { ApiClient } from "./api.js";
import {
  EventAck,
  InboundEventBody,
  OutboundEnvelope,
  isBlocked,
  isDone,
} from "./types.js";
import { RenderedWidget, render } from "./widgets.js";

export interface ChatAppOptions {
  videoUrl?: string;
  pollDelayMs?: number;
  onEnvelope?: (envelope: OutboundEnvelope) => void;
  onWidget?: (widget: RenderedWidget) => void;
}

export class ChatApp {
  readonly messagesEl: HTMLElement;
  readonly statusEl: HTMLElement;
  readonly goOnButton: HTMLButtonElement;
  readonly questionInput: HTMLInputElement;
  readonly askButton: HTMLButtonElement;

  sessionId = "";
  done = false;
  invariantViolations = 0;
  renderedTypes = new Set<string>();
  readonly pollDelayMs: number;

  private pendingResolve: (() => void) | null = null;
  private pendingWaiters: Array<() => void> = [];
  private inFlight = false;

  constructor(
    readonly container: HTMLElement,
    readonly api: ApiClient,
    readonly options: ChatAppOptions = {},
  ) {
    container.classList.add("vt-app");
    this.pollDelayMs = options.pollDelayMs ?? 250;
    this.statusEl = document.createElement("div");
    this.statusEl.className = "vt-status";
    this.messagesEl = document.createElement("div");
    this.messagesEl.className = "vt-messages";

    const controls = document.createElement("div");
    controls.className = "vt-controls";
    this.goOnButton = document.createElement("button");
    this.goOnButton.className = "vt-go-on";
    this.goOnButton.textContent = "Go On";
    this.goOnButton.addEventListener("click", () => void this.goOn());
    this.questionInput = document.createElement("input");
    this.questionInput.className = "vt-question-input";
    this.questionInput.placeholder = "Ask the tutor a question…";
    this.askButton = document.createElement("button");
    this.askButton.className = "vt-ask";
    this.askButton.textContent = "Ask";
    this.askButton.addEventListener("click", () => {
      const text = this.questionInput.value.trim();
      if (text) void this.askQuestion(text);
      this.questionInput.value = "";
    });
    controls.append(this.goOnButton, this.questionInput, this.askButton);
    container.append(this.statusEl, this.messagesEl, controls);
  }

  get pending(): boolean {
    return this.pendingResolve !== null;
  }

  private setStatus(text: string): void {
    this.statusEl.textContent = text;
  }

  private refreshControls(): void {
    // blocking messages disable Go On until answered
    this.goOnButton.disabled = this.pending || this.done || this.inFlight;
  }

  async start(config: unknown, studentId: string, sessionId?: string): Promise<void> {
    const descriptor = await this.api.createSession(config, studentId, sessionId);
    this.sessionId = descriptor.session_id;
    this.setStatus(`session ${descriptor.session_id}: ${descriptor.status}`);
    this.refreshControls();
    await this.pump();
  }

  /** Pull messages until done, parking whenever a blocking widget is pending. */
  private async pump(): Promise<void> {
    while (!this.done) {
      if (this.pending) {
        await this.waitForPending();
        continue;
      }
      const msg = await this.api.nextMessage(this.sessionId);
      if (isDone(msg)) {
        this.done = true;
        this.setStatus("session complete — ask anything to keep exploring");
        this.refreshControls();
        break;
      }
      if (isBlocked(msg)) {
        // blocked without a local widget (e.g. page reload mid-question):
        // surface the phase and poll gently until something unblocks it
        this.setStatus(`waiting: ${msg.phase}`);
        if (this.pending) {
          await this.waitForPending();
        } else {
          await new Promise((resolve) => setTimeout(resolve, this.pollDelayMs));
        }
        continue;
      }
      this.renderEnvelope(msg, true);
    }
  }

  private waitForPending(): Promise<void> {
    if (!this.pending) return Promise.resolve();
    return new Promise((resolve) => this.pendingWaiters.push(resolve));
  }

  private beginPending(): () => void {
    if (this.pendingResolve !== null) {
      this.invariantViolations += 1;
      console.warn("a blocking widget is already pending");
    }
    let finished = false;
    const finish = () => {
      if (finished) return;
      finished = true;
      this.pendingResolve = null;
      this.refreshControls();
      const waiters = this.pendingWaiters.splice(0);
      waiters.forEach((w) => w());
    };
    this.pendingResolve = finish;
    this.refreshControls();
    return finish;
  }

  renderEnvelope(envelope: OutboundEnvelope, mayBlock: boolean): RenderedWidget {
    this.renderedTypes.add(String(envelope.type));
    let finish: () => void = () => undefined;
    if (mayBlock && envelope.need_response) {
      finish = this.beginPending();
    }
    const widget = render(envelope, {
      submit: (body) => this.submitEvent(body),
      finish,
      videoUrl: this.options.videoUrl,
    });
    this.messagesEl.appendChild(widget.root);
    this.options.onEnvelope?.(envelope);
    this.options.onWidget?.(widget);
    return widget;
  }

  private renderStudentLine(text: string): void {
    const node = document.createElement("div");
    node.className = "vt-msg vt-student";
    node.textContent = text;
    this.messagesEl.appendChild(node);
  }

  /** Post one event; the UI locks until the ack arrives. */
  async submitEvent(body: InboundEventBody): Promise<EventAck | null> {
    if (this.inFlight) return null; // one in-flight event per session
    this.inFlight = true;
    this.refreshControls();
    try {
      const ack = await this.api.postEvent(this.sessionId, body);
      if (ack.reply && !ack.duplicate) {
        // immediate reply (feedback / corrective / help) is never blocking
        this.renderEnvelope(ack.reply, false);
      }
      return ack;
    } finally {
      this.inFlight = false;
      this.refreshControls();
    }
  }

  async askQuestion(text: string): Promise<void> {
    this.renderStudentLine(text);
    await this.submitEvent({ type: "question", text });
  }

  async goOn(): Promise<void> {
    if (this.pending || this.done) return;
    await this.submitEvent({ type: "go_on" });
  }
}
