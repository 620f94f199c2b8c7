"""trace_schema.py

Declares the keys of one iteration record as written by
``vqcfd_logic.write_trace_jsonl`` and the column order of the summary CSV.
Plot recipes and tests read these lists instead of hard-coding names.
"""

SUMMARY_COLUMNS = [
    'run',
    'iteration',
    'E_vqcfd',
    'E_direct',
    'delta',
    'E_K_raw',
    'E_P_raw',
    'E_I_raw',
    'fidelity',
    'f_prime',
    'f_double_prime',
]

TRACE_KEYS = [
    'run',
    'iteration',
    'snapshot',
    'theta',
    'cost',
    # quantum (Hadamard-test) path
    'E_vqcfd',
    'E_K',
    'E_P',
    'E_I',
    'E_K_raw',
    'E_P_raw',
    'E_I_raw',
    'method',
    'shots',
    # direct path, observational only
    'E_direct',
    'E_K_direct',
    'E_P_direct',
    'E_I_direct',
    'delta',
    # state quality
    'fidelity',
    'f_prime',
    'f_double_prime',
    'noisy_fidelity',
    # noiseless counterparts of a noisy evaluation
    'E_vqcfd_exact',
    'E_K_raw_exact',
    'E_P_raw_exact',
    'E_I_raw_exact',
]


def get_summary_columns():
    """Column order of ``summary.csv``."""
    return list(SUMMARY_COLUMNS)


def get_trace_keys():
    """Keys of one JSON-lines trace record, in output order.

    Every summary column is also a trace key.
    """
    return list(TRACE_KEYS)
