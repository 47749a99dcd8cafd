"""Command-line entry point: ``kinefield <subcommand> [--config PATH] [--seed N] [--out DIR]``.

Every subcommand reads and writes artifacts in the output directory. Exit codes:
0 success, 2 usage error, 3 validation error (bad config, missing artifact),
4 numerical failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import assignment, diagnostics, evalkit, export, kinematics, langfield, pipeline, presets
from .io import SchemaError, config_hash, read_document, write_document
from .scene import ConfigError, SceneConfig, generate_synthetic, default_cameras, load_masks, load_scene, \
    render_all_masks, save_masks, save_scene
from .train import NumericalError, TrainConfig, load_checkpoint, save_checkpoint, train, write_history

log = logging.getLogger("kinefield")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4
CONFIG_KEYS = {"preset", "scene", "train", "language", "events"}
LANGUAGE_KEYS = {"dim", "mix", "noise", "beta", "gamma", "lambda", "embeddings"}

SCENE_FILE = "scene.json"
MASKS_FILE = "masks.json"
CHECKPOINT_FILE = "checkpoint.json"
HISTORY_FILE = "loss_history.csv"
FIELD_FILE = "language_field.json"


# --- config --------------------------------------------------------------------

def load_config(path):
    """Parse the JSON config into ``(SceneConfig, TrainConfig, language dict, events dict)``."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError([f"config file not found: {path}"]) from None
        except json.JSONDecodeError as e:
            raise ConfigError([f"config is not valid JSON: {e}"]) from None
        if not isinstance(raw, dict):
            raise ConfigError(["config must be a JSON object"])
    errors = [f"unknown config section {k!r}" for k in sorted(set(raw) - CONFIG_KEYS)]
    preset = raw.get("preset", "standard")
    if preset not in presets.SCENES:
        errors.append(f"unknown preset {preset!r} (choose from {sorted(presets.SCENES)})")
        preset = "standard"
    scene_cfg = train_cfg = None
    try:
        scene_cfg = SceneConfig.from_dict(raw["scene"]) if "scene" in raw else presets.SCENES[preset]()
        scene_cfg.validate()
    except ConfigError as e:
        errors += e.errors
    except TypeError as e:
        errors.append(f"scene: {e}")
    try:
        train_cfg = TrainConfig.from_dict(raw.get("train", {})).validate()
        if scene_cfg is not None and "static_ids" not in raw.get("train", {}):
            train_cfg.static_ids = scene_cfg.static_ids
        if scene_cfg is not None and scene_cfg.all_static:
            train_cfg.hinge = False  # rho is 0 for a fully static scene
    except ConfigError as e:
        errors += e.errors
    except TypeError as e:
        errors.append(f"train: {e}")
    language = dict(raw.get("language", {}))
    errors += [f"unknown language key {k!r}" for k in sorted(set(language) - LANGUAGE_KEYS)]
    events = dict(raw.get("events", {}))
    errors += [f"unknown events key {k!r}" for k in sorted(set(events) - {"eps_v", "eps_d"})]
    if errors:
        raise ConfigError(errors)
    return scene_cfg, train_cfg, language, events, raw


def _encoder(language, gt, seed):
    if language.get("embeddings"):
        return langfield.FileEncoder(language["embeddings"])
    return langfield.SyntheticEncoder(gt.states, dim=language.get("dim", langfield.DEFAULT_DIM), seed=seed,
                                      mix=language.get("mix", 0.6), noise=language.get("noise", 0.05))


def _field_kw(language):
    return {"beta": language.get("beta", langfield.BETA), "gamma": language.get("gamma", langfield.GAMMA),
            "lam": language.get("lambda", langfield.RIDGE_LAMBDA)}


# --- subcommands ---------------------------------------------------------------

def cmd_generate(args, cfg):
    scene_cfg = cfg[0]
    scene, gt = generate_synthetic(scene_cfg, args.seed)
    cams = default_cameras(scene_cfg, scene.x0)
    save_scene(args.out / SCENE_FILE, scene, gt, cams, scene_cfg, args.seed)
    save_masks(args.out / MASKS_FILE, render_all_masks(scene, gt, cams, scene_cfg, args.seed))
    print(f"wrote {args.out / SCENE_FILE} ({scene.N} points, K={scene.K}, T={gt.T})")


def cmd_assign(args, cfg):
    scene, gt, cams, scene_cfg = load_scene(args.out / SCENE_FILE)
    masks = load_masks(args.out / MASKS_FILE)
    votes = assignment.accumulate_votes(scene, masks, cams, positions=gt.xobs)
    o = assignment.merge_small_objects(assignment.assign(votes))
    agree = float(np.mean(o == gt.labels))
    scene.o = o
    save_scene(args.out / SCENE_FILE, scene, gt, cams, scene_cfg, read_document(args.out / SCENE_FILE)["seed"])
    write_document(args.out / "assignment.json", "assignment",
                   {"labels": o, "votes": votes, "agreement_with_generator": agree})
    print(f"assigned {np.count_nonzero(o)} of {scene.N} points to objects; agreement {agree:.3f}")


def cmd_train(args, cfg):
    scene, gt, cams, _ = load_scene(args.out / SCENE_FILE)
    tcfg = cfg[1]
    state = None
    if args.resume and (args.out / CHECKPOINT_FILE).exists():
        state = load_checkpoint(args.out / CHECKPOINT_FILE)
    state, history = train(scene, gt, tcfg, state=state, seed=args.seed)
    state.config_hash = config_hash(cfg[4])
    save_checkpoint(args.out / CHECKPOINT_FILE, state)
    write_history(args.out / HISTORY_FILE, history)
    last = history[-1] if history else None
    print(f"trained {state.iteration} iterations" + (f"; final loss {last['total']:.3e}, rho {last['rho']:.3f}"
                                                      if last else ""))


def _load_trained(args):
    scene, gt, cams, scene_cfg = load_scene(args.out / SCENE_FILE)
    return scene, gt, cams, scene_cfg, load_checkpoint(args.out / CHECKPOINT_FILE)


def cmd_diagnose(args, cfg):
    scene, gt, cams, _, state = _load_trained(args)
    doc = diagnostics.report(state, scene, gt.T, seed=args.seed)
    diagnostics.write_report(args.out / "diagnostics.json", doc)
    ratio = doc["shuffle_ratio"]
    print(f"global rho {doc['global_rho']:.3f}; shuffle ratio " + ("n/a" if ratio is None else f"{ratio:.3f}"))


def cmd_features(args, cfg):
    scene, gt, cams, _, state = _load_trained(args)
    ctx, _ = pipeline.kinematic_context(state, scene, gt, cams)
    kinematics.write_features(args.out / "features.json", kinematics.feature_document(ctx))
    print(f"wrote features for objects {ctx.ids}")


def cmd_fit_lang(args, cfg):
    scene, gt, cams, _, state = _load_trained(args)
    encoder = _encoder(cfg[2], gt, args.seed)
    fld, _, _ = pipeline.build_field(state, scene, gt, cams, encoder, **_field_kw(cfg[2]))
    langfield.save_field(args.out / FIELD_FILE, fld)
    print(f"fitted language field for objects {sorted(fld.objects)}" +
          (f"; dropped {fld.dropped}" if fld.dropped else ""))


def cmd_query(args, cfg):
    if not args.text:
        raise UsageError("query needs the query text")
    fld = langfield.load_field(args.out / FIELD_FILE)
    encoder = langfield.encoder_from_dict(fld.encoder)
    scores = langfield.query_score(fld, encoder.encode_text(" ".join(args.text)))
    for rank, k in enumerate(langfield.rank_objects(scores), start=1):
        s, _, f = scores[k]
        print(f"{rank}\tobject {k}\tscore {s:.4f}\tframe {f}")


def _annotations(args, gt, fld):
    if args.annotations:
        T, anns = evalkit.load_annotations(args.annotations)
        if T != gt.T:
            raise ConfigError([f"annotation T={T} does not match scene T={gt.T}"])
        return anns
    anns = evalkit.annotations_from_states(gt.states, sorted(fld.objects))
    evalkit.save_annotations(args.out / "annotations.json", gt.T, anns)
    return anns


def cmd_eval(args, cfg):
    scene, gt, cams, _, state = _load_trained(args)
    fld = langfield.load_field(args.out / FIELD_FILE)
    encoder = langfield.encoder_from_dict(fld.encoder)
    roll = diagnostics.rollout(state, scene, gt.T)
    rows, summary = pipeline.evaluate_field(fld, encoder, _annotations(args, gt, fld), gt.T, scene, gt, cams, roll)
    evalkit.write_report(args.out / "eval_report.json", args.out / "eval_report.csv", rows, summary)
    print(f"{summary['n_queries']} queries: acc {summary['acc']:.3f} tiou {summary['tiou']:.3f} "
          f"viou {summary['viou']:.3f}")


def cmd_export(args, cfg):
    scene, gt, cams, _, state = _load_trained(args)
    fld = langfield.load_field(args.out / FIELD_FILE)
    ctx, roll = pipeline.kinematic_context(state, scene, gt, cams)
    diag = diagnostics.report(state, scene, gt.T, seed=args.seed)
    table_rows = {k: [tuple(np.asarray(v) for v in _table_row(state.table, k, f)) for f in range(gt.T)]
                  for k in ctx.ids}
    events = cfg[3]
    doc = export.export_scene(ctx, diag, table_rows, fld, FIELD_FILE,
                              provenance={"seed": args.seed, "config_hash": config_hash(cfg[4]),
                                          "checkpoint_config_hash": state.config_hash},
                              eps_v=events.get("eps_v", export.EPS_V), eps_d=events.get("eps_d"),
                              extent=scene.extent())
    export.write_export(args.out / "export.json", doc)
    print(f"exported {len(doc['objects'])} objects, {len(doc['events'])} events")


def _table_row(table, k, f):
    if table.mode == "SE3":
        return table.params["omega"][k, f], table.params["trans"][k, f]
    return kinematics._rotation_params(table, k, f)[0], table.params["b"][k, f]


def cmd_ablate(args, cfg):
    scene, gt, cams, _, state = _load_trained(args)
    encoder = _encoder(cfg[2], gt, args.seed)
    ctx, roll = pipeline.kinematic_context(state, scene, gt, cams)
    out = {}
    for name, static_only in (("full", False), ("static_only", True)):
        fld, _, _ = pipeline.build_field(state, scene, gt, cams, encoder, static_only=static_only, ctx=ctx,
                                         roll=roll, **_field_kw(cfg[2]))
        anns = evalkit.annotations_from_states(gt.states, sorted(fld.objects))
        rows, summary = pipeline.evaluate_field(fld, encoder, anns, gt.T, scene, gt, cams, roll)
        out[name] = {"summary": summary, "queries": rows}
    out["delta"] = {m: out["full"]["summary"][m] - out["static_only"]["summary"][m] for m in ("acc", "tiou", "viou")}
    write_document(args.out / "ablation.json", "ablation", out)
    for name in ("full", "static_only"):
        s = out[name]["summary"]
        print(f"{name:12s} acc {s['acc']:.3f} tiou {s['tiou']:.3f} viou {s['viou']:.3f}")


COMMANDS = {
    "generate": (cmd_generate, "synthesize a scene, cameras and label grids"),
    "train": (cmd_train, "fit the deformation network, then the motion table"),
    "assign": (cmd_assign, "assign points to objects by multiview label voting"),
    "diagnose": (cmd_diagnose, "residual, rigid-share and shuffle-test report"),
    "features": (cmd_features, "per-object kinematic feature matrices"),
    "fit-lang": (cmd_fit_lang, "fit the kinematics-conditioned language field"),
    "query": (cmd_query, "rank objects for a text query"),
    "eval": (cmd_eval, "retrieval metrics against frame annotations"),
    "export": (cmd_export, "structured scene export"),
    "ablate": (cmd_ablate, "static-only versus full language field"),
}


class UsageError(Exception):
    pass


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="JSON config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="artifact directory (default .)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="kinefield", parents=[common], description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_text)
        if name == "query":
            sp.add_argument("text", nargs="*", help="query text")
        if name == "eval":
            sp.add_argument("--annotations", type=Path, help="annotation JSON (default: generator states)")
        if name == "train":
            sp.add_argument("--resume", action="store_true", help="continue from an existing checkpoint")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    args.seed = getattr(args, "seed", 0)
    args.out = getattr(args, "out", Path("."))
    for name, default in (("config", None), ("verbose", False), ("annotations", None), ("resume", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command][0](args, cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SchemaError, ValueError, KeyError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
