/** Shared types mirroring the server's JSON contracts. */

export interface SearchHit {
  conversation_id: string;
  dataset: string;
  timestamp: string;
  country: string;
  state: string;
  hashed_ip: string;
  model: string;
  snippet: string;
}

export interface SearchResponse {
  total_matched: number;
  cap_applied: boolean;
  page: number;
  hits: SearchHit[];
}

export interface SubsetRef {
  dataset: string;
  conversation_id: string;
}

export interface FallbackPoint extends SubsetRef {
  x: number;
  y: number;
  preview: string;
}

export interface HighlightResponse {
  matched_in_subset: SubsetRef[];
  fallback_points: FallbackPoint[];
  fallback_used: boolean;
  counters: Record<string, number>;
}

export interface Turn {
  role: "user" | "assistant";
  text: string;
}

export interface ConversationDetail {
  conversation_id: string;
  dataset: string;
  timestamp: string;
  turns: Turn[];
  hashed_ip: string;
  country: string;
  state: string;
  language: string;
  toxic: boolean;
  redacted: boolean;
  model: string;
  turn_count: number;
}

export interface ConversationEnvelope {
  conversation: ConversationDetail;
  from: string | null;
  lang: string | null;
}

export interface MetaResponse {
  doc_count: number;
  datasets: Record<string, number>;
  languages: string[];
  match_cap: number;
}

export interface BundlePoint {
  conversationId: string;
  x: number;
  y: number;
  preview: string;
}

export interface BundleDataset {
  name: string;
  points: BundlePoint[];
}

export interface ParsedBundle {
  datasets: BundleDataset[];
}
