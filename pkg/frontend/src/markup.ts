// Message text is untrusted. Everything is escaped except the bare <em>
// emphasis tag the system replies use; <em> with attributes stays escaped.

const ESCAPES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => ESCAPES[ch]);
}

export function messageHtml(content: string): string {
  // Only balanced bare pairs come back as markup; a stray open or close
  // stays visible as text.
  return escapeHtml(content).replace(
    /&lt;em&gt;([\s\S]*?)&lt;\/em&gt;/g,
    "<em>$1</em>",
  );
}
