// DTOs of the tagging service JSON API. Field names mirror the server
// schemas exactly; the board never invents state beyond these documents.

export interface SliceStats {
  mean: number;
  min: number;
  max: number;
}

export interface FileCandidate {
  name: string;
  path: string;
  kind: 'nifti' | 'unclassifiable';
  dims: [number, number, number] | null;
  spacing: [number, number, number] | null;
  disk_dtype: string | null;
  slice_stats: SliceStats | null;
  reason: string | null;
  preview_url: string | null;
}

export type EntryStatus = 'pending' | 'committed';

export interface ManifestEntry {
  input_path: string;
  subject_id: string;
  tag: string;
  status: EntryStatus;
}

export interface ManifestDoc {
  schema_version: number;
  naming_scheme: string;
  version: number;
  inbox: string | null;
  entries: ManifestEntry[];
}

export interface AssignRequest {
  file: string;
  subject?: string | null;
  tag: string | null;
  expected_version?: number | null;
}

export interface AssignResponse {
  version: number;
  entry: ManifestEntry | null;
}

export interface CommitStatusItem {
  input_path: string;
  status: string;
}

export interface CommitResponse {
  version: number;
  statuses: CommitStatusItem[];
  ok: boolean;
}

export interface VersionConflict {
  error: string;
  current_version: number;
}
