// Non-intrusive notices for save status, conflicts, and task failures.

export type ToastKind = "info" | "error" | "conflict";

export function showToast(
  message: string,
  kind: ToastKind = "info",
  doc: Document = document,
  ttlMs = 4000,
): HTMLElement {
  let region = doc.querySelector<HTMLElement>(".toast-region");
  if (!region) {
    region = doc.createElement("div");
    region.className = "toast-region";
    region.setAttribute("role", "status");
    region.setAttribute("aria-live", "polite");
    doc.body.appendChild(region);
  }
  const toast = doc.createElement("div");
  toast.className = `toast toast-${kind}`;
  toast.textContent = message;
  region.appendChild(toast);
  if (ttlMs > 0) {
    setTimeout(() => toast.remove(), ttlMs);
  }
  return toast;
}
