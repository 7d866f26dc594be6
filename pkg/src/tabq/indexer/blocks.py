"""Block packing: group same-table, same-type documents under the embedding
window so each block needs only one embedding.

A per-row or per-summary embedding scheme multiplies vector count by corpus
size; packing keeps it near one or two vectors per table.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from ..provider import estimate_tokens
from ..registry import Document

logger = logging.getLogger(__name__)


@dataclass
class Block:
    block_id: str  # <table_id>#<doc_type>#blk<seq>
    table_id: str
    doc_type: str
    member_doc_ids: list[str]
    text: str
    token_estimate: int

    def to_dict(self) -> dict:
        return {
            "block_id": self.block_id,
            "table_id": self.table_id,
            "doc_type": self.doc_type,
            "member_doc_ids": list(self.member_doc_ids),
            "text": self.text,
            "token_estimate": self.token_estimate,
        }


def _truncate_to_window(text: str, embed_window: int) -> str:
    budget = embed_window * 4  # inverse of the bytes/4 token estimate
    raw = text.encode("utf-8")
    if len(raw) <= budget:
        return text
    return raw[:budget].decode("utf-8", errors="ignore")


def pack_blocks(documents: list[Document], embed_window: int) -> list[Block]:
    """Greedy first-fit packing in document-sequence order, per (table, type).

    A new block opens whenever appending the next document would push the
    joined text past the window. A single document larger than the window
    gets its own block, truncated to the window with a warning. Deterministic:
    groups are processed in sorted (table_id, doc_type) order and documents
    in their sequence order.
    """
    groups: dict[tuple[str, str], list[Document]] = {}
    for doc in documents:
        groups.setdefault((doc.table_id, doc.doc_type), []).append(doc)

    blocks: list[Block] = []
    for (table_id, doc_type), group in sorted(groups.items()):
        group = sorted(group, key=lambda d: d.seq)
        seq = 0
        members: list[Document] = []
        text = ""
        for doc in group:
            candidate = doc.text if not members else text + "\n" + doc.text
            if members and estimate_tokens(candidate) > embed_window:
                blocks.append(_close(table_id, doc_type, seq, members, text, embed_window))
                seq += 1
                members, text = [], ""
                candidate = doc.text
            members.append(doc)
            text = candidate
        if members:
            blocks.append(_close(table_id, doc_type, seq, members, text, embed_window))
    return blocks


def _close(
    table_id: str,
    doc_type: str,
    seq: int,
    members: list[Document],
    text: str,
    embed_window: int,
) -> Block:
    if estimate_tokens(text) > embed_window:
        # only reachable for a block holding a single oversized document
        logger.warning(
            "document %s exceeds embed window (%d tokens), truncating",
            members[0].doc_id,
            estimate_tokens(text),
        )
        text = _truncate_to_window(text, embed_window)
    return Block(
        block_id=f"{table_id}#{doc_type}#blk{seq}",
        table_id=table_id,
        doc_type=doc_type,
        member_doc_ids=[d.doc_id for d in members],
        text=text,
        token_estimate=estimate_tokens(text),
    )
