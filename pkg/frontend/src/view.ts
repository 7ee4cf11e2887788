// Views are pure functions from state to a plain node tree; the browser entry
// point materializes the tree into DOM. Tests assert on the tree directly,
// which also makes "every rendered number came from the backend" checkable.

export interface VNode {
  tag: string;
  attrs: Record<string, string>;
  children: (VNode | string)[];
}

export function h(
  tag: string,
  attrs: Record<string, string> = {},
  ...children: (VNode | string | null | undefined)[]
): VNode {
  return {
    tag,
    attrs,
    children: children.filter((c): c is VNode | string => c !== null && c !== undefined),
  };
}

export function collectText(node: VNode | string, out: string[] = []): string[] {
  if (typeof node === "string") {
    out.push(node);
    return out;
  }
  for (const child of node.children) {
    collectText(child, out);
  }
  return out;
}

export function findByClass(node: VNode, className: string, out: VNode[] = []): VNode[] {
  if ((node.attrs["class"] ?? "").split(" ").includes(className)) {
    out.push(node);
  }
  for (const child of node.children) {
    if (typeof child !== "string") {
      findByClass(child, className, out);
    }
  }
  return out;
}

// Numbers are always formatted straight off a backend field.
export const formatScore = (value: number): string => value.toFixed(4);
export const formatWeight = (value: number): string => value.toFixed(2);
export const formatProgress = (value: number): string => `${Math.round(value * 100)}%`;

/** Browser-only: materialize the tree under a parent element. */
export function mount(node: VNode | string, parent: Element): void {
  if (typeof node === "string") {
    parent.appendChild(document.createTextNode(node));
    return;
  }
  const el = document.createElement(node.tag);
  for (const [key, value] of Object.entries(node.attrs)) {
    el.setAttribute(key, value);
  }
  for (const child of node.children) {
    mount(child, el);
  }
  parent.appendChild(el);
}

export function replaceChildren(parent: Element, node: VNode): void {
  parent.innerHTML = "";
  mount(node, parent);
}
