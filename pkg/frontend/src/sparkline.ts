// Tiny dependency-free SVG line chart helpers.

export function sparklinePath(values: number[], width: number, height: number): string {
  if (values.length === 0) return "";
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  const dx = values.length > 1 ? width / (values.length - 1) : 0;
  return values
    .map((v, i) => {
      const x = (i * dx).toFixed(1);
      const y = (height - ((v - lo) / span) * height).toFixed(1);
      return `${i === 0 ? "M" : "L"}${x} ${y}`;
    })
    .join(" ");
}

export function sparklineSvg(values: number[], width = 120, height = 28): string {
  const path = sparklinePath(values, width, height);
  return (
    `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}" ` +
    `preserveAspectRatio="none"><path d="${path}" fill="none" stroke="currentColor" ` +
    `stroke-width="1.5"/></svg>`
  );
}

export function chartSvg(points: Array<[number, number]>, width: number, height: number): string {
  if (points.length === 0) {
    return `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}"></svg>`;
  }
  const values = points.map(([, v]) => v);
  const path = sparklinePath(values, width - 8, height - 8);
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  return (
    `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">` +
    `<g transform="translate(4,4)"><path d="${path}" fill="none" stroke="currentColor" ` +
    `stroke-width="1.5"/></g>` +
    `<text x="${width - 4}" y="12" text-anchor="end" class="chart-label">${hi.toPrecision(4)}</text>` +
    `<text x="${width - 4}" y="${height - 4}" text-anchor="end" class="chart-label">${lo.toPrecision(4)}</text>` +
    `</svg>`
  );
}
