// Widget rendering: one DOM fragment per outbound envelope type.
//
// Blocking widgets own their interaction flow: they post the learner's event
// through the submit hook and call `finish()` once the exchange is complete
// (a failed code run keeps the widget live so the learner can retry).

import { EventAck, InboundEventBody, OutboundEnvelope } from "./types.js";

export interface WidgetHooks {
  submit(body: InboundEventBody): Promise<EventAck | null>;
  finish(): void;
  videoUrl?: string;
}

export interface RenderedWidget {
  root: HTMLElement;
  envelope: OutboundEnvelope;
  blocking: boolean;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function bubble(body: string, extraClass = ""): HTMLElement {
  const root = el("div", `vt-msg vt-mentor ${extraClass}`.trim());
  root.appendChild(el("p", "vt-body", body));
  return root;
}

export function optionLetter(option: string): string {
  const match = /^\s*([A-Za-z])[).]/.exec(option);
  return match ? match[1] : option;
}

function renderText(envelope: OutboundEnvelope, hooks: WidgetHooks): RenderedWidget {
  const root = bubble(envelope.body, envelope.interaction === "annotation" ? "vt-annotation" : "");
  if (!envelope.need_response) {
    return { root, envelope, blocking: false };
  }
  // free-text response (articulation / annotation stand-in)
  const input = el("textarea", "vt-text-answer");
  input.rows = 2;
  const send = el("button", "vt-submit", "Send answer");
  send.addEventListener("click", async () => {
    if (send.disabled) return;
    send.disabled = true;
    await hooks.submit({ type: "student_response", text: input.value });
    input.disabled = true;
    hooks.finish();
  });
  root.append(input, send);
  return { root, envelope, blocking: true };
}

function renderMultipleChoice(envelope: OutboundEnvelope, hooks: WidgetHooks): RenderedWidget {
  const root = bubble(envelope.body, "vt-mcq");
  const options = envelope.options ?? [];
  if (!options.length) {
    // structured options missing: degrade to a free-text widget
    return renderText(envelope, hooks);
  }
  const list = el("div", "vt-options");
  const buttons: HTMLButtonElement[] = [];
  for (const option of options) {
    const button = el("button", "vt-option", option);
    button.addEventListener("click", async () => {
      if (button.disabled) return;
      buttons.forEach((b) => (b.disabled = true));
      button.classList.add("vt-chosen");
      await hooks.submit({ type: "student_response", choice: optionLetter(option) });
      hooks.finish();
    });
    buttons.push(button);
    list.appendChild(button);
  }
  root.appendChild(list);
  return { root, envelope, blocking: envelope.need_response };
}

function renderFillInBlanks(envelope: OutboundEnvelope, hooks: WidgetHooks): RenderedWidget {
  const root = bubble(envelope.body, "vt-blanks");
  const payload = envelope.blanks;
  if (!payload) {
    return { root, envelope, blocking: false };
  }
  const line = el("code", "vt-code-line");
  const selects: HTMLSelectElement[] = [];
  const pieces = payload.display_line.split(/___(\d+)___/);
  // split yields [text, "1", text, "2", text, ...]
  for (let i = 0; i < pieces.length; i += 1) {
    if (i % 2 === 0) {
      line.appendChild(document.createTextNode(pieces[i]));
      continue;
    }
    const blankIndex = parseInt(pieces[i], 10) - 1;
    const select = el("select", "vt-blank");
    const placeholder = el("option", "", "choose…");
    placeholder.value = "";
    select.appendChild(placeholder);
    for (const candidate of payload.options[blankIndex] ?? []) {
      const option = el("option", "", candidate);
      option.value = candidate;
      select.appendChild(option);
    }
    selects.push(select);
    line.appendChild(select);
  }
  const send = el("button", "vt-submit", "Check my line");
  send.addEventListener("click", async () => {
    if (send.disabled) return;
    if (selects.some((s) => !s.value)) return; // all blanks must be chosen
    send.disabled = true;
    selects.forEach((s) => (s.disabled = true));
    await hooks.submit({
      type: "student_response",
      blanks: selects.map((s) => s.value),
    });
    hooks.finish();
  });
  root.append(line, send);
  return { root, envelope, blocking: envelope.need_response };
}

function renderShowCode(envelope: OutboundEnvelope, hooks: WidgetHooks): RenderedWidget {
  const root = bubble(envelope.body, "vt-show-code");
  const pre = el("pre", "vt-code-block");
  pre.appendChild(el("code", "", envelope.code ?? ""));
  root.appendChild(pre);

  const copy = el("button", "vt-copy", "Copy code");
  copy.addEventListener("click", () => {
    const clipboard = (globalThis.navigator as Navigator | undefined)?.clipboard;
    if (clipboard?.writeText) void clipboard.writeText(envelope.code ?? "");
  });
  root.appendChild(copy);

  if (!envelope.need_response) {
    return { root, envelope, blocking: false };
  }

  // execution reporter: the learner runs the code in their own notebook/IDE
  const ran = el("button", "vt-ran-ok", "I ran it — it worked");
  const failed = el("button", "vt-ran-failed", "It failed");
  const stderrBox = el("textarea", "vt-stderr");
  stderrBox.rows = 2;
  stderrBox.placeholder = "paste the error output";
  stderrBox.style.display = "none";
  const sendFailure = el("button", "vt-send-failure", "Send error");
  sendFailure.style.display = "none";

  ran.addEventListener("click", async () => {
    if (ran.disabled) return;
    ran.disabled = true;
    failed.disabled = true;
    await hooks.submit({ type: "code_execution", success: true });
    hooks.finish();
  });
  failed.addEventListener("click", () => {
    stderrBox.style.display = "";
    sendFailure.style.display = "";
  });
  sendFailure.addEventListener("click", async () => {
    if (sendFailure.disabled) return;
    sendFailure.disabled = true;
    await hooks.submit({
      type: "code_execution",
      success: false,
      stderr: stderrBox.value,
    });
    // a failed run keeps the widget pending so the learner can retry
    sendFailure.disabled = false;
  });
  root.append(ran, failed, stderrBox, sendFailure);
  return { root, envelope, blocking: true };
}

function renderPlayClip(envelope: OutboundEnvelope, hooks: WidgetHooks): RenderedWidget {
  const root = bubble(envelope.body, "vt-clip");
  const clip = envelope.clip ?? { start_s: 0, end_s: 0 };

  const label = el(
    "div",
    "vt-clip-range",
    `Video segment ${clip.start_s.toFixed(2)}s – ${clip.end_s.toFixed(2)}s`,
  );
  root.appendChild(label);

  let video: HTMLVideoElement | null = null;
  if (hooks.videoUrl) {
    video = el("video", "vt-player");
    video.src = hooks.videoUrl;
    video.controls = true;
    video.dataset.startS = String(clip.start_s);
    video.dataset.endS = String(clip.end_s);
    video.addEventListener("loadedmetadata", () => {
      if (video) video.currentTime = clip.start_s;
    });
    video.addEventListener("timeupdate", () => {
      if (video && video.currentTime >= clip.end_s) {
        video.pause();
        void complete();
      }
    });
    root.appendChild(video);
  }

  let completed = false;
  const complete = async () => {
    if (completed) return;
    completed = true;
    cont.disabled = true;
    await hooks.submit({
      type: "video_finished",
      segment_id: envelope.knowledge_id?.split("#")[0],
    });
    hooks.finish();
  };
  const cont = el("button", "vt-clip-done", "I watched it — continue");
  cont.addEventListener("click", () => void complete());
  root.appendChild(cont);
  return { root, envelope, blocking: envelope.need_response };
}

export function render(envelope: OutboundEnvelope, hooks: WidgetHooks): RenderedWidget {
  switch (envelope.type) {
    case "text":
      return renderText(envelope, hooks);
    case "multiple_choice":
      return renderMultipleChoice(envelope, hooks);
    case "fill_in_blanks":
      return renderFillInBlanks(envelope, hooks);
    case "show_code":
      return renderShowCode(envelope, hooks);
    case "play_clip":
      return renderPlayClip(envelope, hooks);
    default: {
      // unknown type: raw-JSON fallback with a visible warning
      const root = el("div", "vt-msg vt-mentor vt-unknown");
      root.appendChild(el("p", "vt-warning", `Unknown message type: ${envelope.type}`));
      const pre = el("pre", "vt-raw");
      pre.textContent = JSON.stringify(envelope, null, 2);
      root.appendChild(pre);
      return { root, envelope, blocking: false };
    }
  }
}
