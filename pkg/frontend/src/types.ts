/** Wire types for the /v1 API; field names match the documented schema. */

export interface FragmentRef {
  fragment_id: string;
  preview: string;
}

export interface Citation {
  title: string;
  authors: string[];
  date: string | null;
  uri: string | null;
  confidence: number;
  fragments: FragmentRef[];
}

export interface ProbeUsed {
  label: string;
  weight: number;
}

export interface AskResponse {
  answer_text: string;
  citations: Citation[];
  probes_used: ProbeUsed[];
  model_id: string;
  offline: boolean;
}

export interface TurnView extends AskResponse {
  query: string;
  timestamp: string;
}

export interface SessionHistory {
  session_id: string;
  collection_id: string;
  turns: TurnView[];
}

export interface CollectionInfo {
  collection_id: string;
  title: string;
  documents: number;
  indexed: boolean;
}

export interface HealthResponse {
  status: string;
  offline_mode: boolean;
  index_sizes: Record<string, number>;
}
