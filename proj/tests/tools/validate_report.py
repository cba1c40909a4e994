"""Runs `carbonwatch report --format json` and validates it against the schema."""

import json
import subprocess
import sys
import tempfile

import jsonschema


def report(cli, logdir):
    done = subprocess.run([cli, "report", logdir, "--format", "json"],
                          capture_output=True, text=True, check=False)
    if done.returncode != 0:
        sys.exit(f"report exited with {done.returncode}: {done.stderr}")
    return json.loads(done.stdout)


def main():
    cli, schema_path, logdir = sys.argv[1:4]
    with open(schema_path) as f:
        schema = json.load(f)
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    doc = report(cli, logdir)
    validator.validate(doc)
    if abs(doc["total"]["km_by_car"] - 26.296) > 0.001:
        sys.exit(f"unexpected total km {doc['total']['km_by_car']}")

    with tempfile.TemporaryDirectory() as empty:
        validator.validate(report(cli, empty))
        with open(f"{empty}/broken_carbon.jsonl", "w") as f:
            f.write('{"type": "epoch"}\n')
        broken = report(cli, empty)
        validator.validate(broken)
        if len(broken["errors"]) != 1:
            sys.exit("broken log was not reported as an error")
    print("report JSON matches the schema")


if __name__ == "__main__":
    main()
