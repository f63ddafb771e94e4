import csv
import io
import json
import os
import random
import string
import time


class ResultUtils:
    @staticmethod
    def generate_unique_filename(stem, ext):
        """
        Generate a unique result filename using the current timestamp and a random string.

        :param stem: Leading part of the name, e.g. the scenario name
        :param ext: File extension without the dot
        :return: Unique filename
        """
        # Generate a random string of fixed length
        random_str = "".join(random.choices(string.ascii_letters + string.digits, k=6))
        return f"{stem}_{int(time.time())}_{random_str}.{ext.lower()}"

    @staticmethod
    def json_text(data):
        """Stable JSON text: sorted keys, two-space indent, trailing newline."""
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def csv_text(columns, rows):
        """
        Render a table as CSV.

        :param columns: Header names
        :param rows: Iterable of row sequences or dicts keyed by column
        :return: CSV text
        """
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(c) for c in columns]
            writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
        return buffer.getvalue()

    @staticmethod
    def write_text(text, path):
        folder = os.path.dirname(path)
        if folder:
            os.makedirs(folder, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        return path

    @staticmethod
    def render(payload, columns, rows, fmt):
        """
        Pick the JSON or CSV rendering of a result.

        :param payload: JSON-ready object
        :param columns: CSV header, or None when the result has no table form
        :param rows: CSV rows
        :param fmt: 'json' or 'csv'
        :return: text
        """
        if fmt == "csv" and columns is not None:
            return ResultUtils.csv_text(columns, rows)
        return ResultUtils.json_text(payload)
