from .verify import VerifyCommand
from .eigenmaps import EigenmapsCommand
from .dimred import DimredCommand
from .train_lm import TrainLmCommand
from .compare_lm import CompareLmCommand

COMMANDS = {
    command.name: command
    for command in (VerifyCommand, EigenmapsCommand, DimredCommand, TrainLmCommand, CompareLmCommand)
}
