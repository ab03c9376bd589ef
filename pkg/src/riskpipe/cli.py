"""Command-line entry points.

Thin wrappers over the library: every command loads config, builds the
providers it needs, calls one library function, and writes files. Exit
codes: 0 success, 1 usage error, 2 data or validation error, 3 provider
failure.
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import click

from . import analytics, config as config_mod, refinement
from .documents import DirectorySource, load_sic_map
from .errors import ConfigError, DataError, ProviderError
from .judging import EvalLogWriter, distribution_from_counts, read_eval_log
from .mapping import build_index, load_index, save_index
from .pipeline import (
    JUDGED_FILE,
    judge_records,
    map_records,
    read_jsonl,
    run_pipeline,
    write_jsonl,
)
from .taxonomy import load_taxonomy, validate_taxonomy


def _load_config(ctx: click.Context) -> config_mod.RunConfig:
    path = ctx.obj.get("config_path")
    if path:
        cfg = config_mod.load_config(path)
    else:
        cfg = config_mod.default_config()
    seed = ctx.obj.get("seed")
    if seed is not None:
        cfg = config_mod.RunConfig(**{**cfg.__dict__, "seed": seed})
    out_dir = ctx.obj.get("out_dir")
    if out_dir is not None:
        cfg = config_mod.RunConfig(**{**cfg.__dict__, "out_dir": out_dir})
    return cfg


def _taxonomy_path(cfg: config_mod.RunConfig, override: str | None) -> Path:
    path = override or cfg.taxonomy_path
    if not path:
        raise ConfigError("no taxonomy path: pass one or set [paths].taxonomy")
    return Path(path)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="TOML config file.")
@click.option("--seed", type=int, default=None, help="Override the configured RNG seed.")
@click.option("--out-dir", type=click.Path(), default=None, help="Override the output directory.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, seed: int | None, out_dir: str | None) -> None:
    """Risk-factor extraction, judging, refinement, and validation."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["seed"] = seed
    ctx.obj["out_dir"] = out_dir


@cli.group()
def taxonomy() -> None:
    """Inspect and embed the category taxonomy."""


@taxonomy.command("validate")
@click.argument("path", type=click.Path(), required=False)
@click.pass_context
def taxonomy_validate(ctx: click.Context, path: str | None) -> None:
    cfg = _load_config(ctx)
    t = load_taxonomy(_taxonomy_path(cfg, path))
    violations = validate_taxonomy(t)
    if violations:
        for v in violations:
            click.echo(f"{v.code}: {v.message}", err=True)
        raise DataError(f"taxonomy failed validation with {len(violations)} violation(s)")
    click.echo(f"OK, {len(t)} categories (version {t.version})")


@taxonomy.command("embed")
@click.argument("path", type=click.Path(), required=False)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Index file to write.")
@click.pass_context
def taxonomy_embed(ctx: click.Context, path: str | None, out_path: str | None) -> None:
    cfg = _load_config(ctx)
    t = load_taxonomy(_taxonomy_path(cfg, path))
    embedder = config_mod.make_embedder(cfg)
    index = build_index(t, embedder, cfg.instruction)
    target = out_path or cfg.index_path
    if not target:
        raise ConfigError("no index path: pass --out or set [paths].index")
    Path(target).parent.mkdir(parents=True, exist_ok=True)
    save_index(index, target)
    click.echo(f"wrote {target}: {len(index)} rows, dim {index.dim}, {index.embedder_fingerprint}")


@cli.command("extract")
@click.option("--docs", "docs_dir", type=click.Path(), default=None, help="Directory of *.txt documents.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def extract_cmd(ctx: click.Context, docs_dir: str | None, out_path: str) -> None:
    """Stage 1 only: documents to extracted-risk JSONL."""
    from .extraction import extract_risks

    cfg = _load_config(ctx)
    source_dir = docs_dir or cfg.documents_path
    if not source_dir:
        raise ConfigError("no document directory: pass --docs or set [paths].documents")
    extractor = config_mod.make_extractor(cfg)
    records = []
    n_docs = 0
    for document_id, text in DirectorySource(source_dir):
        n_docs += 1
        for risk in extract_risks(text, extractor):
            records.append(risk.as_record(document_id))
    count = write_jsonl(out_path, records)
    click.echo(f"extracted {count} risks from {n_docs} documents -> {out_path}")


@cli.command("map")
@click.option("--in", "in_path", type=click.Path(), required=True, help="Extracted-risk JSONL.")
@click.option("--index", "index_path", type=click.Path(), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def map_cmd(ctx: click.Context, in_path: str, index_path: str | None, out_path: str) -> None:
    """Stage 2 only: extracted JSONL + index to mapped JSONL."""
    cfg = _load_config(ctx)
    source = index_path or cfg.index_path
    if not source:
        raise ConfigError("no index path: pass --index or set [paths].index")
    index = load_index(source)
    embedder = config_mod.make_embedder(cfg)
    mapped = map_records(read_jsonl(in_path), index, embedder, cfg.embed_tag_with_quote)
    count = write_jsonl(out_path, mapped)
    click.echo(f"mapped {count} risks -> {out_path}")


@cli.command("judge")
@click.option("--in", "in_path", type=click.Path(), required=True, help="Mapped-risk JSONL.")
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None)
@click.option("--log", "log_path", type=click.Path(), required=True, help="Eval log to append to.")
@click.option("--threshold", type=click.IntRange(1, 5), default=None)
@click.pass_context
def judge_cmd(
    ctx: click.Context,
    in_path: str,
    taxonomy_path: str | None,
    log_path: str,
    threshold: int | None,
) -> None:
    """Stage 3 only: mapped JSONL to eval-log records plus a summary."""
    cfg = _load_config(ctx)
    t = load_taxonomy(_taxonomy_path(cfg, taxonomy_path))
    provider = config_mod.make_judge(cfg)
    level = threshold if threshold is not None else cfg.threshold
    writer = EvalLogWriter(log_path, threshold=level)
    judged = judge_records(read_jsonl(in_path), t, provider, writer, threshold=level)
    retained = sum(1 for j in judged if j.score >= level)
    click.echo(
        f"judged {len(judged)} mappings, retained {retained} at threshold {level} -> {log_path}"
    )


@cli.group()
def pipeline() -> None:
    """Full multi-stage runs."""


@pipeline.command("run")
@click.option("--docs", "docs_dir", type=click.Path(), default=None)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None)
@click.option("--index", "index_path", type=click.Path(), default=None, help="Reuse a saved index.")
@click.option("--run-id", default=None, help="Fixed run id (default: timestamp-derived).")
@click.option("--policy", type=click.Choice(["abort", "skip"]), default=None)
@click.pass_context
def pipeline_run(
    ctx: click.Context,
    docs_dir: str | None,
    taxonomy_path: str | None,
    index_path: str | None,
    run_id: str | None,
    policy: str | None,
) -> None:
    """Extract, map, judge, and dedup every document in a directory."""
    cfg = _load_config(ctx)
    source_dir = docs_dir or cfg.documents_path
    if not source_dir:
        raise ConfigError("no document directory: pass --docs or set [paths].documents")
    t = load_taxonomy(_taxonomy_path(cfg, taxonomy_path))
    embedder = config_mod.make_embedder(cfg)
    index_source = index_path or cfg.index_path
    if index_source and Path(index_source).exists():
        index = load_index(index_source)
    else:
        index = build_index(t, embedder, cfg.instruction)
    manifest = run_pipeline(
        DirectorySource(source_dir),
        t,
        index,
        embedder,
        config_mod.make_extractor(cfg),
        config_mod.make_judge(cfg),
        out_dir=cfg.out_dir,
        run_id=run_id,
        threshold=cfg.threshold,
        failure_policy=policy or cfg.failure_policy,
        embed_tag_with_quote=cfg.embed_tag_with_quote,
        config_snapshot=cfg.snapshot(),
        doc_workers=cfg.doc_workers,
    )
    totals = manifest.totals
    click.echo(
        f"run {manifest.run_id}: {totals['documents']} documents, "
        f"{totals['extracted']} extracted, {totals['retained']} retained, "
        f"{totals['final']} final -> {manifest.out_dir}"
    )
    failed = [d for d, info in manifest.documents.items() if info["status"] == "failed"]
    if failed:
        click.echo(f"failed documents: {', '.join(failed)}", err=True)


@cli.group()
def refine() -> None:
    """Taxonomy maintenance from judge feedback."""


@refine.command("aggregate")
@click.option("--log", "log_path", type=click.Path(), required=True)
@click.option("--threshold", type=click.IntRange(1, 5), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None, help="TSV report (default stdout).")
@click.pass_context
def refine_aggregate(
    ctx: click.Context, log_path: str, threshold: int | None, out_path: str | None
) -> None:
    """Rank categories by volume of low-scoring mappings."""
    cfg = _load_config(ctx)
    level = threshold if threshold is not None else cfg.threshold
    troubles = refinement.aggregate_low_quality(read_eval_log(log_path), threshold=level)
    rows = [["category_id", "low_quality_count", "total", "low_quality_share"]]
    for trouble in troubles:
        total = sum(trouble.score_histogram.values())
        rows.append(
            [
                trouble.category_id,
                str(trouble.low_quality_count),
                str(total),
                f"{trouble.low_quality_share:.4f}",
            ]
        )
    _write_tsv(rows, out_path)


@refine.command("test-variants")
@click.option("--cases", "cases_path", type=click.Path(), required=True, help="TP/FP test set TSV.")
@click.option(
    "--descriptions",
    "descriptions_path",
    type=click.Path(),
    required=True,
    help="Candidate descriptions, one per line; first line is the incumbent.",
)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
def refine_test_variants(
    ctx: click.Context, cases_path: str, descriptions_path: str, out_path: str | None
) -> None:
    """Score candidate descriptions by TP/FP embedding separation."""
    cfg = _load_config(ctx)
    cases = refinement.load_test_cases(cases_path)
    lines = [
        line.strip()
        for line in Path(descriptions_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not lines:
        raise DataError(f"{descriptions_path}: no descriptions")
    embedder = config_mod.make_embedder(cfg)
    results = refinement.rank_variants(lines, cases, embedder, cfg.instruction)
    _write_tsv(refinement.variant_report_rows(results), out_path)
    baseline = next(r for r in results if r.description == lines[0])
    best = results[0]
    if best.description != lines[0] and baseline.separation != 0:
        gain = refinement.improvement_pct(baseline.separation, best.separation)
        click.echo(f"best variant improves separation by {gain:.1f}%", err=True)


@refine.command("propose")
@click.option("--log", "log_path", type=click.Path(), required=True)
@click.option("--category", "category_id", required=True)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None)
@click.option("--n", "n_variants", type=int, default=3)
@click.option("--threshold", type=click.IntRange(1, 5), default=None)
@click.pass_context
def refine_propose(
    ctx: click.Context,
    log_path: str,
    category_id: str,
    taxonomy_path: str | None,
    n_variants: int,
    threshold: int | None,
) -> None:
    """Draft replacement descriptions for one troubled category."""
    cfg = _load_config(ctx)
    t = load_taxonomy(_taxonomy_path(cfg, taxonomy_path))
    try:
        category = t.get(category_id)
    except KeyError:
        raise DataError(f"category {category_id!r} is not in the taxonomy")
    level = threshold if threshold is not None else cfg.threshold
    troubles = refinement.aggregate_low_quality(read_eval_log(log_path), threshold=level)
    trouble = next((x for x in troubles if x.category_id == category_id), None)
    if trouble is None:
        raise DataError(f"category {category_id} does not appear in the eval log")
    proposer = config_mod.make_proposer(cfg)
    variants = refinement.propose_variants(category, trouble, proposer, n_variants)
    for i, variant in enumerate(variants, start=1):
        click.echo(f"{i}. {variant}")


@cli.group()
def analyze() -> None:
    """Validation analytics over final records."""


def _analysis_inputs(ctx, records_path, sic_path, taxonomy_path):
    cfg = _load_config(ctx)
    t = load_taxonomy(_taxonomy_path(cfg, taxonomy_path))
    records = read_jsonl(records_path)
    sic = load_sic_map(sic_path)
    return cfg, t, records, sic


@analyze.command("cluster")
@click.option("--records", "records_path", type=click.Path(), required=True, help="Final-records JSONL.")
@click.option("--sic", "sic_path", type=click.Path(), required=True, help="ticker,sic4 CSV.")
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None)
@click.option("--level", type=click.Choice(list(analytics.LEVELS)), default="tertiary")
@click.option("--sic-digits", type=click.Choice(["2", "3", "4"]), default="2")
@click.option("--iterations", type=int, default=10000)
@click.pass_context
def analyze_cluster(
    ctx: click.Context,
    records_path: str,
    sic_path: str,
    taxonomy_path: str | None,
    level: str,
    sic_digits: str,
    iterations: int,
) -> None:
    """Same-industry vs cross-industry similarity with the four tests."""
    cfg, t, records, sic = _analysis_inputs(ctx, records_path, sic_path, taxonomy_path)
    report, roc = analytics.clustering_report(
        records,
        t,
        sic,
        level=level,
        digits=int(sic_digits),
        iterations=iterations,
        seed=cfg.seed,
        company_of=analytics.company_from_document_id,
    )
    header = ["level", "sic_digits", "mean_same", "mean_diff", "delta", "auc"]
    row = analytics.clustering_row(level, int(sic_digits), report, roc)
    click.echo("\t".join(header))
    click.echo("\t".join(row))
    click.echo(
        f"welch_t={report.welch_t:.2f} (p={report.welch_p:.3g})  "
        f"ks_d={report.ks_d:.3f} (p={report.ks_p:.3g})  "
        f"perm_p={report.perm_p:.3g}  cohens_d={report.cohens_d:.3f}"
    )
    click.echo(
        f"pairs: {report.n_same} same, {report.n_diff} diff; excluded: "
        f"{report.n_excluded_no_sic} without SIC, {report.n_excluded_zero_row} zero-row"
    )


@analyze.command("roc")
@click.option("--records", "records_path", type=click.Path(), required=True)
@click.option("--sic", "sic_path", type=click.Path(), required=True)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None)
@click.option("--level", type=click.Choice(list(analytics.LEVELS)), default="tertiary")
@click.option("--sic-digits", type=click.Choice(["2", "3", "4"]), default="2")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Curve CSV (fpr,tpr).")
@click.pass_context
def analyze_roc(
    ctx: click.Context,
    records_path: str,
    sic_path: str,
    taxonomy_path: str | None,
    level: str,
    sic_digits: str,
    out_path: str,
) -> None:
    """Write the industry-membership ROC curve for external plotting."""
    cfg, t, records, sic = _analysis_inputs(ctx, records_path, sic_path, taxonomy_path)
    report, roc = analytics.clustering_report(
        records,
        t,
        sic,
        level=level,
        digits=int(sic_digits),
        iterations=1,  # the curve does not need the permutation test
        seed=cfg.seed,
        company_of=analytics.company_from_document_id,
    )
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in roc.curve:
            writer.writerow([f"{fpr:.6f}", f"{tpr:.6f}"])
    click.echo(f"auc={roc.auc:.4f} ({report.n_same} same, {report.n_diff} diff) -> {out_path}")


@analyze.command("sector")
@click.option("--records", "records_path", type=click.Path(), required=True)
@click.option("--sic", "sic_path", type=click.Path(), required=True)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None)
@click.option("--prefix", required=True, help="SIC prefix defining the sector group.")
@click.option("--level", type=click.Choice(list(analytics.LEVELS)), default="tertiary")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
def analyze_sector(
    ctx: click.Context,
    records_path: str,
    sic_path: str,
    taxonomy_path: str | None,
    prefix: str,
    level: str,
    out_path: str | None,
) -> None:
    """Category prevalence within one sector vs the whole sample."""
    _, t, records, sic = _analysis_inputs(ctx, records_path, sic_path, taxonomy_path)
    rows_out = [["category", "in_group_pct", "overall_pct"]]
    for row in analytics.sector_enrichment(
        records, t, sic, prefix, level, company_of=analytics.company_from_document_id
    ):
        rows_out.append([row.category, f"{row.in_group_pct:.1f}", f"{row.overall_pct:.1f}"])
    _write_tsv(rows_out, out_path)


@analyze.command("histogram")
@click.option("--records", "records_path", type=click.Path(), required=True)
@click.option("--sic", "sic_path", type=click.Path(), required=True)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None)
@click.option("--level", type=click.Choice(list(analytics.LEVELS)), default="tertiary")
@click.option("--sic-digits", type=click.Choice(["2", "3", "4"]), default="2")
@click.option("--bins", type=int, default=50)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def analyze_histogram(
    ctx: click.Context,
    records_path: str,
    sic_path: str,
    taxonomy_path: str | None,
    level: str,
    sic_digits: str,
    bins: int,
    out_path: str,
) -> None:
    """Similarity histogram data (same vs diff industry) as CSV."""
    _, t, records, sic = _analysis_inputs(ctx, records_path, sic_path, taxonomy_path)
    matrix = analytics.build_risk_matrix(
        records, t, level, company_of=analytics.company_from_document_id
    )
    weights = analytics.idf_weights(matrix)
    partition = analytics.partition_pairs(matrix, weights, sic, int(sic_digits))
    hist = analytics.similarity_histogram(partition, bins=bins)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "same_count", "diff_count"])
        for i in range(len(hist.same_counts)):
            writer.writerow(
                [
                    f"{hist.bin_edges[i]:.6f}",
                    f"{hist.bin_edges[i + 1]:.6f}",
                    hist.same_counts[i],
                    hist.diff_counts[i],
                ]
            )
    click.echo(
        f"{len(partition.same_industry)} same and {len(partition.diff_industry)} "
        f"diff pairs -> {out_path}"
    )


@cli.command("distribution")
@click.option("--log", "log_path", type=click.Path(), required=True)
def distribution_cmd(log_path: str) -> None:
    """Score histogram of an eval log."""
    counts: dict[int, int] = {}
    for record in read_eval_log(log_path):
        score = int(record["score"])
        counts[score] = counts.get(score, 0) + 1
    dist = distribution_from_counts(counts)
    click.echo("score\tcount\tpercent")
    for score in sorted(dist.counts):
        click.echo(f"{score}\t{dist.counts[score]}\t{dist.percentages[score]:.1f}")
    click.echo(f"total\t{dist.total}\t")


def _write_tsv(rows: list[list[str]], out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerows(rows)
        click.echo(f"wrote {out_path} ({len(rows) - 1} rows)")
    else:
        for row in rows:
            click.echo("\t".join(row))


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.exceptions.ClickException as exc:
        exc.show(file=sys.stderr)
        return 2
    except (DataError, ConfigError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except ProviderError as exc:
        click.echo(f"provider error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
