import json
import logging
import math
import sys

log = logging.getLogger(__name__)

OUTPUT_FORMATS = ('tsv', 'json')
MISSING = 'NA'

# Arguments that do not change results and are left out of the echoed header
_NOT_ECHOED = {'func', 'debug', 'output', 'format', 'processes', 'sub-command'}


def echoed_arguments(args):
    """
    Sorted, JSON-friendly view of the parsed arguments that determine a run's results.

    Args:
        args (argparse.Namespace): Parsed arguments.

    Returns:
        dict: argument name to value.
    """
    echoed = {}
    for key, value in sorted(vars(args).items()):
        if key in _NOT_ECHOED:
            continue
        if hasattr(value, 'value'):
            value = value.value
        elif isinstance(value, (list, tuple)):
            value = [getattr(v, 'value', v) for v in value]
        elif value is not None and not isinstance(value, (int, float, str, bool)):
            value = str(value)
        echoed[key] = value
    return echoed


def write_table(frame, output, fmt, arguments):
    """
    Write a result table as TSV (flag set echoed as leading comment lines) or as JSON.

    Args:
        frame (pd.DataFrame): The table.
        output (str): Output path, or None / "-" for stdout.
        fmt (str): "tsv" or "json".
        arguments (dict): Echoed arguments, see echoed_arguments.
    """
    if fmt == 'tsv':
        header = ''.join(f'# {key}={_format_value(value)}\n' for key, value in arguments.items())
        text = header + frame.to_csv(sep='\t', index=False, na_rep=MISSING, lineterminator='\n')
    elif fmt == 'json':
        rows = [{key: _json_value(value) for key, value in record.items()}
                for record in frame.to_dict(orient='records')]
        payload = {'arguments': arguments, 'columns': list(frame.columns), 'rows': rows}
        text = json.dumps(payload, indent=2) + '\n'
    else:
        raise ValueError(f'"fmt" must be one of {", ".join(OUTPUT_FORMATS)}.')

    if output is None or output == '-':
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(output, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        log.info(f'Results written to: {output}')


def _format_value(value):
    if isinstance(value, list):
        return ','.join(str(v) for v in value)
    return str(value)


def _json_value(value):
    if hasattr(value, 'item'):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value
