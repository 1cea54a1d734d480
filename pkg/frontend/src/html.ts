export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;')
}

export function tableHtml(rows: string[][], className = ''): string {
  const [header, ...body] = rows
  const head = header
    ? `<tr>${header.map((h) => `<th>${escapeHtml(h)}</th>`).join('')}</tr>`
    : ''
  const cells = body
    .map((row) => `<tr>${row.map((c) => `<td>${escapeHtml(c)}</td>`).join('')}</tr>`)
    .join('')
  return `<table class="${className}">${head}${cells}</table>`
}

export function listHtml(lines: string[], className = ''): string {
  return `<ul class="${className}">${lines
    .map((line) => `<li>${escapeHtml(line)}</li>`)
    .join('')}</ul>`
}
