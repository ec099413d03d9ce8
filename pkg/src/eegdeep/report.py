"""CSV tables and matplotlib figures for training runs.

Figures are drawn with the object-oriented matplotlib API on an Agg
canvas (no pyplot global state) and written as SVG with a fixed hash
salt and no date stamp, so reruns produce identical bytes.
"""

import csv

import matplotlib
from matplotlib.figure import Figure

HISTORY_COLUMNS = ["epoch", "train_loss", "train_acc", "val_acc"]
SUMMARY_COLUMNS = [
    "algorithm", "best_epoch", "best_val", "test_acc",
    "training_accuracy_pct", "validation_accuracy_pct", "testing_accuracy_pct",
    "reference_testing_pct", "consistent",
]
GRID_COLUMNS = ["rank", "filter_num", "filter_size", "pool_size", "batch_size", "lr"] + SUMMARY_COLUMNS
SUBJECT_COLUMNS = ["subject", "n_trials", "best_epoch", "best_val", "test_acc"]

# Published test accuracies (%) for the full BCI data, keyed by run name.
REFERENCE_TESTING_PCT = {
    "CNN_30_28": 62.0, "CNN_30_20": 60.0, "CNN_30_12": 59.0, "CNN_30_4": 54.0,
    "CNN_20_28": 62.0, "CNN_20_20": 67.0, "CNN_20_12": 60.0, "CNN_20_4": 59.0,
    "CNN_10_28": 58.0, "CNN_10_20": 69.0, "CNN_10_12": 57.0, "CNN_10_4": 59.0,
    "LSTM_t25": 48.0, "LSTM_t50": 55.0, "LSTM_t100": 52.0, "LSTM_t200": 54.0,
    "LSTM_t400": 53.0, "LSTM_t600": 46.0, "LSTM_t800": 46.0,
    "GRU_t25": 48.0, "GRU_t50": 51.0, "GRU_t100": 44.0, "GRU_t200": 43.0,
    "GRU_t400": 42.0, "GRU_t600": 46.0, "GRU_t800": 34.0,
    "MixLSTM_1": 70.0, "MixLSTM_2": 71.0, "MixLSTM_3": 70.0,
    "MixLSTM_2, units_num in LSTM = (10,10)": 67.0,
}
CONSISTENT_WITHIN_PCT = 10.0

matplotlib.rcParams["svg.hashsalt"] = "eegdeep"


def _fmt(v):
    return "" if v is None else (f"{v:.6g}" if isinstance(v, float) else str(v))


def _write(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def summary_row(record):
    ref = REFERENCE_TESTING_PCT.get(record.name)
    test_pct = 100.0 * record.test_accuracy
    return {
        "algorithm": record.name,
        "best_epoch": record.best_epoch,
        "best_val": record.best_val_accuracy,
        "test_acc": record.test_accuracy,
        "training_accuracy_pct": round(100.0 * record.best_train_accuracy, 2),
        "validation_accuracy_pct": round(100.0 * record.best_val_accuracy, 2),
        "testing_accuracy_pct": round(test_pct, 2),
        "reference_testing_pct": ref,
        "consistent": "" if ref is None else ("yes" if abs(test_pct - ref) <= CONSISTENT_WITHIN_PCT else "no"),
    }


def write_history_csv(record, path):
    rows = [
        {"epoch": e, "train_loss": l, "train_acc": ta, "val_acc": va}
        for e, (l, ta, va) in enumerate(zip(record.train_loss, record.train_acc, record.val_acc), start=1)
    ]
    _write(path, HISTORY_COLUMNS, rows)


def write_summary_csv(records, path):
    _write(path, SUMMARY_COLUMNS, [summary_row(r) for r in records])


def write_grid_csv(grid_rows, path):
    rows = []
    for rank, gr in enumerate(grid_rows, start=1):
        h = gr.hyper
        row = summary_row(gr.record)
        row.update(rank=rank, filter_num=h.filter_num, filter_size=h.filter_size,
                   pool_size=h.pool_size, batch_size=h.batch_size, lr=h.lr)
        rows.append(row)
    _write(path, GRID_COLUMNS, rows)


def write_subjects_csv(subject_rows, path):
    rows = [
        {"subject": r.subject, "n_trials": r.n_trials, "best_epoch": r.record.best_epoch,
         "best_val": r.record.best_val_accuracy, "test_acc": r.record.test_accuracy}
        for r in subject_rows
    ]
    _write(path, SUBJECT_COLUMNS, rows)


def _new_figure():
    # 8x4 in at 100 dpi: an 800x400 viewport
    fig = Figure(figsize=(8, 4), dpi=100)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_history(record, loss_path, acc_path):
    epochs = range(1, len(record.train_loss) + 1)
    fig, ax = _new_figure()
    ax.plot(epochs, record.train_loss, color="tab:blue", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy")
    ax.set_title(f"{record.name}: training loss")
    ax.legend(loc="upper right", frameon=False)
    _save(fig, loss_path)

    fig, ax = _new_figure()
    ax.plot(epochs, record.train_acc, color="tab:blue", label="train")
    ax.plot(epochs, record.val_acc, color="tab:orange", label="validation")
    if record.best_epoch:
        ax.axvline(record.best_epoch, color="0.6", linestyle="--", linewidth=1, label="best epoch")
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_title(f"{record.name}: accuracy")
    ax.legend(loc="lower right", frameon=False)
    _save(fig, acc_path)


def plot_subjects(subject_rows, path):
    labels = [str(r.subject) for r in subject_rows]
    x = range(len(labels))
    fig, ax = _new_figure()
    ax.bar([i - 0.2 for i in x], [r.record.best_val_accuracy for r in subject_rows],
           width=0.4, color="tab:orange", label="validation")
    ax.bar([i + 0.2 for i in x], [r.record.test_accuracy for r in subject_rows],
           width=0.4, color="tab:blue", label="test")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_xlabel("subject")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="upper left", frameon=False)
    _save(fig, path)


def plot_grid(grid_rows, path):
    """Validation and test accuracy of every grid point, in rank order."""
    ranks = range(1, len(grid_rows) + 1)
    fig, ax = _new_figure()
    ax.plot(ranks, [g.record.best_val_accuracy for g in grid_rows], color="tab:orange", label="validation")
    ax.plot(ranks, [g.record.test_accuracy for g in grid_rows], color="tab:blue",
            linestyle="none", marker=".", label="test")
    ax.set_xlabel("rank")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="upper right", frameon=False)
    _save(fig, path)
