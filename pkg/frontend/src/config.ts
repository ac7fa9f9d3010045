/** Extension settings, mirroring the file-watcher agent's WatchConfig semantics. */

export interface ExtensionConfig {
  serverUrl: string;
  authToken: string;
  actorId: string;
  workspaceId: string;
  exerciseId?: string;
  debounceMs: number;
  enabled: boolean;
}

export const DEFAULT_DEBOUNCE_MS = 2000;
export const MIN_DEBOUNCE_MS = 100;

/** Fill defaults and enforce invariants; throws RangeError on bad settings. */
export function resolveConfig(partial: Partial<ExtensionConfig>): ExtensionConfig {
  const config: ExtensionConfig = {
    serverUrl: partial.serverUrl ?? "",
    authToken: partial.authToken ?? "",
    actorId: partial.actorId ?? "",
    workspaceId: partial.workspaceId ?? "",
    exerciseId: partial.exerciseId || undefined,
    debounceMs: partial.debounceMs ?? DEFAULT_DEBOUNCE_MS,
    enabled: partial.enabled ?? false,
  };
  if (config.debounceMs < MIN_DEBOUNCE_MS) {
    throw new RangeError(`debounceMs must be >= ${MIN_DEBOUNCE_MS}`);
  }
  if (config.enabled) {
    for (const key of ["serverUrl", "authToken", "actorId", "workspaceId"] as const) {
      if (config[key] === "") {
        throw new RangeError(`${key} is required while capture is enabled`);
      }
    }
  }
  return config;
}
