/** VS Code adapter: wires editor signals into the capture tracker. */

import * as fs from "node:fs";
import * as path from "node:path";
import * as vscode from "vscode";

import { ExtensionConfig, resolveConfig } from "./config";
import { EventQueue, QueueStatus } from "./queue";
import { CaptureTracker, EditorDiagnostic, EXTENSION_MARKER } from "./tracker";

function readConfig(): ExtensionConfig {
  const settings = vscode.workspace.getConfiguration("codetrail");
  return resolveConfig({
    enabled: settings.get("enabled", false),
    serverUrl: settings.get("serverUrl", ""),
    authToken: settings.get("authToken", ""),
    actorId: settings.get("actorId", ""),
    workspaceId: settings.get("workspaceId", ""),
    exerciseId: settings.get("exerciseId", ""),
    debounceMs: settings.get("debounceMs", 2000),
  });
}

function severityToLevel(severity: vscode.DiagnosticSeverity): EditorDiagnostic["level"] {
  switch (severity) {
    case vscode.DiagnosticSeverity.Error:
      return "Error";
    case vscode.DiagnosticSeverity.Warning:
      return "Warning";
    case vscode.DiagnosticSeverity.Hint:
      return "Debug";
    default:
      return "Info";
  }
}

export function activate(context: vscode.ExtensionContext): void {
  const root = vscode.workspace.workspaceFolders?.[0]?.uri.fsPath;
  let config: ExtensionConfig;
  try {
    config = readConfig();
  } catch (err) {
    vscode.window.showWarningMessage(`codetrail: bad settings: ${String(err)}`);
    return;
  }
  if (!config.enabled || root === undefined) {
    return;
  }

  // Claim the workspace: the file-watcher agent refuses to run alongside us.
  fs.writeFileSync(path.join(root, EXTENSION_MARKER), "");

  const statusItem = vscode.window.createStatusBarItem(vscode.StatusBarAlignment.Right);
  context.subscriptions.push(statusItem);
  const showStatus = (status: QueueStatus) => {
    const label: Record<QueueStatus, string> = {
      idle: "capturing",
      sending: "capturing",
      offline: "offline (queued)",
      stopped: "disabled",
    };
    statusItem.text = `codetrail: ${label[status]}`;
    statusItem.show();
  };
  showStatus("idle");

  const queue = new EventQueue({
    serverUrl: config.serverUrl,
    authToken: config.authToken,
    onStatusChange: showStatus,
    onRejected: (rejected) => {
      vscode.window.showWarningMessage(
        `codetrail: server rejected ${rejected.length} event(s): ${rejected[0].violation}`
      );
    },
  });
  const tracker = new CaptureTracker(config, (event) => queue.enqueue(event));

  const relPath = (doc: vscode.TextDocument): string | null => {
    if (doc.uri.scheme !== "file") {
      return null;
    }
    const rel = path.relative(root, doc.uri.fsPath);
    if (rel.startsWith("..") || path.isAbsolute(rel)) {
      return null; // outside the configured workspace
    }
    return rel.split(path.sep).join("/");
  };

  for (const doc of vscode.workspace.textDocuments) {
    const rel = relPath(doc);
    if (rel !== null) tracker.documentOpened(rel, doc.getText());
  }

  context.subscriptions.push(
    vscode.workspace.onDidOpenTextDocument((doc) => {
      const rel = relPath(doc);
      if (rel !== null) tracker.documentOpened(rel, doc.getText());
    }),
    vscode.workspace.onDidChangeTextDocument((e) => {
      const rel = relPath(e.document);
      if (rel !== null) tracker.documentChanged(rel, e.document.getText());
    }),
    vscode.workspace.onDidSaveTextDocument((doc) => {
      const rel = relPath(doc);
      if (rel !== null) tracker.documentSaved(rel, doc.getText());
    }),
    vscode.languages.onDidChangeDiagnostics((e) => {
      for (const uri of e.uris) {
        const rel = relPath({ uri, getText: () => "" });
        if (rel === null) continue;
        tracker.diagnosticsChanged(
          rel,
          vscode.languages.getDiagnostics(uri).map((d) => ({
            level: severityToLevel(d.severity),
            message: d.message,
            line: d.range.start.line + 1,
            source: d.source,
          }))
        );
      }
    }),
    {
      dispose: () => {
        tracker.flushPending();
        queue.stop();
        fs.rmSync(path.join(root, EXTENSION_MARKER), { force: true });
      },
    }
  );
}

export function deactivate(): void {
  // Cleanup happens via context.subscriptions disposal.
}
