/**
 * Minimal ambient declarations for the `vscode` host API — just the slice
 * extension.ts touches. The real module is provided by the editor at
 * runtime; depending on the full type package is unnecessary for a build
 * that only needs these signatures.
 */
declare module "vscode" {
  export interface Disposable {
    dispose(): void;
  }

  export interface Uri {
    fsPath: string;
    scheme: string;
  }

  export interface TextDocument {
    uri: Uri;
    getText(): string;
  }

  export interface TextDocumentChangeEvent {
    document: TextDocument;
  }

  export interface Position {
    line: number;
  }

  export interface Range {
    start: Position;
  }

  export enum DiagnosticSeverity {
    Error = 0,
    Warning = 1,
    Information = 2,
    Hint = 3,
  }

  export interface Diagnostic {
    range: Range;
    message: string;
    severity: DiagnosticSeverity;
    source?: string;
  }

  export interface DiagnosticChangeEvent {
    uris: readonly Uri[];
  }

  export interface WorkspaceFolder {
    uri: Uri;
  }

  export interface WorkspaceConfiguration {
    get<T>(section: string, defaultValue: T): T;
  }

  export namespace workspace {
    const workspaceFolders: readonly WorkspaceFolder[] | undefined;
    function getConfiguration(section: string): WorkspaceConfiguration;
    function onDidChangeTextDocument(
      listener: (e: TextDocumentChangeEvent) => void
    ): Disposable;
    function onDidOpenTextDocument(listener: (d: TextDocument) => void): Disposable;
    function onDidSaveTextDocument(listener: (d: TextDocument) => void): Disposable;
    const textDocuments: readonly TextDocument[];
  }

  export namespace languages {
    function onDidChangeDiagnostics(
      listener: (e: DiagnosticChangeEvent) => void
    ): Disposable;
    function getDiagnostics(uri: Uri): Diagnostic[];
  }

  export enum StatusBarAlignment {
    Left = 1,
    Right = 2,
  }

  export interface StatusBarItem extends Disposable {
    text: string;
    tooltip?: string;
    show(): void;
  }

  export namespace window {
    function createStatusBarItem(alignment?: StatusBarAlignment): StatusBarItem;
    function showWarningMessage(message: string): void;
  }

  export interface ExtensionContext {
    subscriptions: Disposable[];
  }
}
