import argparse

from django.core.management import call_command, get_commands
from django.core.management.base import BaseCommand, CommandError

COMMANDS = {
    "synth": "synth",
    "preprocess": "preprocess",
    "split": "split",
    "train-vae": "train_vae",
    "train-dit": "train_dit",
    "generate": "generate",
    "evaluate": "evaluate",
    "audit-privacy": "audit_privacy",
    "gradcheck": "gradcheck",
}


class Command(BaseCommand):
    help = "Run a pipeline command by its hyphenated name, e.g. `run train-vae --config desk.json`."

    def add_arguments(self, parser):
        parser.add_argument("pipeline_command", choices=sorted(COMMANDS))
        parser.add_argument("arguments", nargs=argparse.REMAINDER, help="Flags passed on to the command.")

    def handle(self, *args, **options):
        name = COMMANDS[options["pipeline_command"]]
        if name not in get_commands():
            raise CommandError(f"command {name!r} is not installed")
        call_command(name, *options["arguments"], stdout=self.stdout, stderr=self.stderr)
