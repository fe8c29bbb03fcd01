"""Command groups, registered on the CLI the way blueprints are registered on an app."""
from dataclasses import dataclass, field


@dataclass
class Command:
    name: str
    handler: object
    help: str
    flags: tuple


@dataclass
class CommandGroup:
    name: str
    import_name: str
    commands: list = field(default_factory=list)

    def command(self, name, help="", flags=()):
        """Register the decorated function as subcommand ``name``.

        ``flags`` names the shared flag sets (data, train, attack, patch, ...)
        the subcommand accepts.
        """
        def decorator(fn):
            self.commands.append(Command(name, fn, help, tuple(flags)))
            return fn
        return decorator
