"""Command line entry points.

Exit codes: 0 success, 1 usage problems, 2 bad or inconsistent data,
3 endpoint/transport failures.
"""

from __future__ import annotations

import csv
import io as _io
import sys
from pathlib import Path

import click

from .blocking import min_tokens_for_recall
from .chunking import ChunkingConfig, chunk_transcript
from .errors import DataError, TransportError
from .gateway import GatewayConfig, ModelGateway
from .io import (
    load_gold_labels,
    load_stories,
    load_transcript,
    read_labels_csv,
    write_chunks_jsonl,
    write_stories,
)
from .matchers import MATCHER_KINDS
from .pipeline import (
    RunConfig,
    compare_story_sets,
    evaluate,
    generate_stories,
    predictions_from_report,
    run_alignment,
)
from .reporting import load_report


def _gateway_options(fn):
    for option in reversed(
        [
            click.option("--endpoint", help="Model endpoint base URL."),
            click.option(
                "--embed-model", default="embed-small", show_default=True
            ),
            click.option("--chat-model", default="chat-small", show_default=True),
            click.option(
                "--cache-dir",
                type=click.Path(file_okay=False),
                help="Embedding cache directory.",
            ),
            click.option("--timeout", default=30.0, show_default=True),
            click.option(
                "--retry-backoff",
                default=0.5,
                show_default=True,
                help="Base delay between retries; doubles each attempt.",
            ),
        ]
    ):
        fn = option(fn)
    return fn


def _chunking_options(fn):
    for option in reversed(
        [
            click.option(
                "--strategy",
                type=click.Choice(["turns", "tokens", "lines"]),
                default="turns",
                show_default=True,
            ),
            click.option("--window", type=int, help="Window size (strategy units)."),
            click.option("--stride", type=int, help="Window step (strategy units)."),
        ]
    ):
        fn = option(fn)
    return fn


def _make_gateway(endpoint, embed_model, chat_model, cache_dir, timeout, retry_backoff):
    if endpoint is None:
        return None
    return ModelGateway(
        GatewayConfig(
            base_url=endpoint,
            embed_model=embed_model,
            chat_model=chat_model,
            cache_dir=cache_dir,
            timeout=timeout,
            retry_backoff=retry_backoff,
        )
    )


def _chunking_config(strategy, window, stride) -> ChunkingConfig:
    return ChunkingConfig(strategy=strategy, window=window, stride=stride)


def _emit(text: str, out: str | None, label: str) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {label} to {out}", err=True)
    else:
        click.echo(text, nl=False)


@click.group()
@click.version_option(package_name="storyalign")
def cli() -> None:
    """Align user stories with the transcript chunks that support them."""


@cli.command("chunk")
@click.argument("transcripts", nargs=-1, required=True)
@_chunking_options
@click.option("--transcript-format", default="auto", show_default=True)
@click.option("--out", required=True, help="Chunks JSONL output path.")
def chunk_cmd(transcripts, strategy, window, stride, transcript_format, out):
    """Slice TRANSCRIPTS into chunks and write them as JSONL."""
    config = _chunking_config(strategy, window, stride)
    chunks = []
    for path in transcripts:
        transcript = load_transcript(path, fmt=transcript_format)
        chunks.extend(chunk_transcript(transcript, config))
    write_chunks_jsonl(chunks, out)
    click.echo(
        f"wrote {len(chunks)} chunks from {len(transcripts)} transcripts to {out}",
        err=True,
    )


@cli.command("align")
@click.argument("transcripts", nargs=-1, required=True)
@click.option("--stories", "stories_path", required=True, help="Stories file.")
@_chunking_options
@_gateway_options
@click.option("--transcript-format", default="auto", show_default=True)
@click.option("--stories-format", default="auto", show_default=True)
@click.option(
    "--matcher",
    type=click.Choice(list(MATCHER_KINDS)),
    default="llm_judge",
    show_default=True,
)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--min-shared", default=2, show_default=True)
@click.option("--scorer-url", help="External scorer endpoint (external_scorer).")
@click.option("--retry-limit", default=2, show_default=True)
@click.option("--batch-size", default=200, show_default=True)
@click.option("--blocking-k", type=int, help="Keep top-K chunks per story.")
@click.option(
    "--overhead",
    default=0,
    show_default=True,
    help="Extra prompt tokens charged per judged pair.",
)
@click.option("--seed", type=int)
@click.option("--prompt-dir", type=click.Path(file_okay=False))
@click.option("--out", help="Report JSON output path (default: stdout).")
@click.option("--journal", help="Verdict journal path for resumable runs.")
@click.option("--resume", is_flag=True, help="Continue from an existing journal.")
def align_cmd(
    transcripts,
    stories_path,
    strategy,
    window,
    stride,
    endpoint,
    embed_model,
    chat_model,
    cache_dir,
    timeout,
    retry_backoff,
    transcript_format,
    stories_format,
    matcher,
    threshold,
    min_shared,
    scorer_url,
    retry_limit,
    batch_size,
    blocking_k,
    overhead,
    seed,
    prompt_dir,
    out,
    journal,
    resume,
):
    """Judge every candidate (chunk, story) pair and report the alignment."""
    gateway = _make_gateway(endpoint, embed_model, chat_model, cache_dir, timeout, retry_backoff)
    config = RunConfig(
        transcript_paths=tuple(transcripts),
        stories_path=stories_path,
        transcript_format=transcript_format,
        stories_format=stories_format,
        chunking=_chunking_config(strategy, window, stride),
        matcher=matcher,
        threshold=threshold,
        min_shared=min_shared,
        scorer=scorer_url,
        retry_limit=retry_limit,
        batch_size=batch_size,
        blocking_k=blocking_k,
        per_pair_overhead=overhead,
        seed=seed,
        prompt_dir=prompt_dir,
        out_path=out,
        journal_path=journal,
        resume=resume,
    )
    report = run_alignment(config, gateway)
    if out:
        click.echo(
            f"correctness={report.correctness:.4f} "
            f"completeness={report.completeness:.4f} "
            f"judged={report.judged_pairs} tokens={report.token_cost} -> {out}",
            err=True,
        )
    else:
        click.echo(report.to_json(), nl=False)
    for warning in report.warnings:
        click.echo(f"warning: {warning}", err=True)


@cli.command("eval")
@click.option("--report", "report_path", required=True, help="Alignment report JSON.")
@click.option("--gold", "gold_path", required=True, help="Gold labels CSV.")
@click.option("--out", help="Eval JSON output path (default: stdout).")
def eval_cmd(report_path, gold_path, out):
    """Score a report's positive pairs against gold labels."""
    report = load_report(report_path)
    gold = load_gold_labels(
        gold_path,
        known_chunks=report.per_chunk,
        known_stories=report.per_story,
    )
    result = evaluate(
        predictions_from_report(report), gold, parse_failures=report.parse_failures
    )
    _emit(result.to_json(), out, "eval report")
    click.echo(f"macro_f1={result.macro_f1:.4f} pairs={result.pair_count}", err=True)


@cli.command("generate")
@click.argument("transcripts", nargs=-1, required=True)
@_gateway_options
@click.option("--transcript-format", default="auto", show_default=True)
@click.option("--max-stories", default=50, show_default=True)
@click.option("--temperature", default=0.0, show_default=True)
@click.option("--seed", type=int)
@click.option("--prompt-dir", type=click.Path(file_okay=False))
@click.option("--out", help="Stories output path (default: stdout).")
@click.option(
    "--stories-format",
    type=click.Choice(["lines", "jsonl"]),
    default="lines",
    show_default=True,
)
def generate_cmd(
    transcripts,
    endpoint,
    embed_model,
    chat_model,
    cache_dir,
    timeout,
    retry_backoff,
    transcript_format,
    max_stories,
    temperature,
    seed,
    prompt_dir,
    out,
    stories_format,
):
    """Draft user stories from TRANSCRIPTS with the chat model."""
    gateway = _make_gateway(endpoint, embed_model, chat_model, cache_dir, timeout, retry_backoff)
    if gateway is None:
        raise DataError("generate needs --endpoint")
    loaded = [load_transcript(p, fmt=transcript_format) for p in transcripts]
    result = generate_stories(
        loaded,
        gateway,
        max_stories=max_stories,
        temperature=temperature,
        seed=seed,
        prompt_dir=prompt_dir,
    )
    if out:
        write_stories(list(result.stories), out, fmt=stories_format)
        click.echo(f"wrote {len(result.stories)} stories to {out}", err=True)
    else:
        for story in result.stories:
            click.echo(story.text)
    if result.truncated:
        click.echo(f"warning: output truncated to {max_stories} stories", err=True)
    if result.non_template_count:
        click.echo(
            f"warning: {result.non_template_count} stories do not follow the "
            "role/goal template",
            err=True,
        )


@cli.command("block-sweep")
@click.argument("transcripts", nargs=-1, required=True)
@click.option("--stories", "stories_path", required=True)
@click.option(
    "--gold",
    "gold_path",
    required=True,
    help="Reference labels CSV; its positive pairs define recall.",
)
@_chunking_options
@_gateway_options
@click.option("--transcript-format", default="auto", show_default=True)
@click.option("--stories-format", default="auto", show_default=True)
@click.option(
    "--target",
    "targets",
    multiple=True,
    type=float,
    default=(0.8, 0.9, 0.95, 0.99),
    show_default=True,
)
@click.option("--overhead", default=0, show_default=True)
@click.option("--out", help="Sweep CSV output path (default: stdout).")
def block_sweep_cmd(
    transcripts,
    stories_path,
    gold_path,
    strategy,
    window,
    stride,
    endpoint,
    embed_model,
    chat_model,
    cache_dir,
    timeout,
    retry_backoff,
    transcript_format,
    stories_format,
    targets,
    overhead,
    out,
):
    """Smallest top-K (and its token cost) meeting each recall target."""
    gateway = _make_gateway(endpoint, embed_model, chat_model, cache_dir, timeout, retry_backoff)
    if gateway is None:
        raise DataError("block-sweep needs --endpoint for embeddings")
    config = _chunking_config(strategy, window, stride)
    chunks = []
    for path in transcripts:
        chunks.extend(chunk_transcript(load_transcript(path, fmt=transcript_format), config))
    stories = load_stories(stories_path, fmt=stories_format)
    reference = {
        pair for pair, label in read_labels_csv(gold_path).items() if label == 1
    }
    texts = {chunk.id: chunk.text for chunk in chunks}
    for story in stories:
        texts[story.id] = story.text
    embeddings = gateway.embed_by_id(texts)
    buffer = _io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["target_recall", "k_star", "token_fraction", "matcher_calls"])
    for target in targets:
        point = min_tokens_for_recall(
            stories, chunks, embeddings, reference, target, per_pair_overhead=overhead
        )
        writer.writerow(
            [f"{target:g}", point.k, f"{point.token_fraction:.6f}", point.matcher_calls]
        )
    _emit(buffer.getvalue(), out, "sweep")


@cli.command("compare")
@click.option(
    "--report",
    "reports",
    multiple=True,
    required=True,
    metavar="NAME=PATH",
    help="A named report; repeat for each story set.",
)
@click.option("--diff", "diff_pair", metavar="NAME,NAME", help="Reports to diff.")
@click.option("--out", help="Comparison JSON output path (default: stdout).")
def compare_cmd(reports, diff_pair, out):
    """Compare story sets judged over the same chunk universe."""
    named = []
    for spec_arg in reports:
        name, sep, path = spec_arg.partition("=")
        if not sep or not name or not path:
            raise click.UsageError(
                f"--report takes NAME=PATH, got {spec_arg!r}"
            )
        named.append((name, load_report(path)))
    pair = None
    if diff_pair:
        left, sep, right = diff_pair.partition(",")
        if not sep or not left or not right:
            raise click.UsageError(f"--diff takes NAME,NAME, got {diff_pair!r}")
        pair = (left.strip(), right.strip())
    result = compare_story_sets(named, diff_pair=pair)
    _emit(result.to_json(), out, "comparison")


@cli.command("agreement")
@click.argument("journals", nargs=-1, required=True)
@click.option("--out", help="Agreement JSON output path (default: stdout).")
def agreement_cmd(journals, out):
    """Inter-annotator agreement across session journals."""
    from .annotation import agreement, load_session
    from .reporting import dumps_canonical

    sessions = [load_session(path) for path in journals]
    try:
        result = agreement(sessions)
    finally:
        for session in sessions:
            session.close()
    _emit(dumps_canonical(result.to_dict()) + "\n", out, "agreement report")


@cli.command("annotate-serve")
@click.argument("transcripts", nargs=-1, required=True)
@click.option("--stories", "stories_path", required=True)
@_chunking_options
@_gateway_options
@click.option("--transcript-format", default="auto", show_default=True)
@click.option("--stories-format", default="auto", show_default=True)
@click.option(
    "--embedder",
    type=click.Choice(["hash", "endpoint"]),
    default="hash",
    show_default=True,
    help="hash is offline and deterministic; endpoint uses --endpoint.",
)
@click.option(
    "--sessions-dir",
    default="annotation-sessions",
    show_default=True,
    type=click.Path(file_okay=False),
)
@click.option("--static-dir", type=click.Path(file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True)
@click.option(
    "--check",
    is_flag=True,
    help="Build the corpus and app, then exit without serving.",
)
def annotate_serve_cmd(
    transcripts,
    stories_path,
    strategy,
    window,
    stride,
    endpoint,
    embed_model,
    chat_model,
    cache_dir,
    timeout,
    retry_backoff,
    transcript_format,
    stories_format,
    embedder,
    sessions_dir,
    static_dir,
    host,
    port,
    check,
):
    """Serve the annotation API (and UI, if built) over one corpus."""
    from .service import AnnotationService, build_app, embed_corpus, hash_embedder

    config = _chunking_config(strategy, window, stride)
    loaded = [load_transcript(p, fmt=transcript_format) for p in transcripts]
    chunks = []
    for transcript in loaded:
        chunks.extend(chunk_transcript(transcript, config))
    stories = load_stories(stories_path, fmt=stories_format)
    if embedder == "hash":
        embeddings = embed_corpus(chunks, stories, hash_embedder())
    else:
        gateway = _make_gateway(endpoint, embed_model, chat_model, cache_dir, timeout, retry_backoff)
        if gateway is None:
            raise DataError("--embedder endpoint needs --endpoint")
        texts = {chunk.id: chunk.text for chunk in chunks}
        for story in stories:
            texts[story.id] = story.text
        embeddings = gateway.embed_by_id(texts)
    service = AnnotationService(
        chunks,
        stories,
        embeddings,
        sessions_dir=sessions_dir,
        transcripts=loaded,
    )
    app = build_app(service, static_dir=static_dir)
    click.echo(
        f"annotation service over {len(chunks)} chunks / {len(stories)} stories",
        err=True,
    )
    if check:
        service.close()
        return
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")


def main(argv: list[str] | None = None) -> int:
    """Console entry point with the documented exit code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except TransportError as exc:
        click.echo(f"transport error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
