// Wire types mirroring the tutoring service's JSON envelopes.

export type EnvelopeType =
  | "text"
  | "multiple_choice"
  | "fill_in_blanks"
  | "show_code"
  | "play_clip";

export interface BlanksPayload {
  display_line: string;
  options: string[][];
  count: number;
}

export interface ClipPayload {
  start_s: number;
  end_s: number;
}

export interface OutboundEnvelope {
  type: EnvelopeType | string;
  body: string;
  need_response: boolean;
  move?: string;
  interaction?: string;
  knowledge_id?: string;
  options?: string[] | null;
  blanks?: BlanksPayload | null;
  clip?: ClipPayload | null;
  code?: string | null;
}

export interface BlockedMarker {
  blocked: true;
  phase: string;
}

export interface DoneMarker {
  done: true;
}

export type NextMessage = OutboundEnvelope | BlockedMarker | DoneMarker;

export function isBlocked(msg: NextMessage): msg is BlockedMarker {
  return (msg as BlockedMarker).blocked === true;
}

export function isDone(msg: NextMessage): msg is DoneMarker {
  return (msg as DoneMarker).done === true;
}

export type InboundEventBody =
  | { type: "video_finished"; segment_id?: string }
  | { type: "student_response"; text?: string; choice?: string; blanks?: string[] }
  | { type: "code_execution"; success: boolean; stderr?: string }
  | { type: "question"; text: string }
  | { type: "go_on" };

export type InboundEvent = InboundEventBody & { event_id: string };

export interface EventAck {
  ok: boolean;
  event_id: string;
  duplicate?: boolean;
  reply?: OutboundEnvelope;
}

export interface SessionDescriptor {
  session_id: string;
  student_id: string;
  status: string;
  queue_length?: number;
  video_label?: string;
}

export interface StudentComponent {
  anchor: string;
  p_mastery: number;
  attempts: number;
}

export interface StudentModelSnapshot {
  student_id: string;
  components: StudentComponent[];
}
