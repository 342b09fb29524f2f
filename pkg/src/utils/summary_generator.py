import os
import time
import colorama
from colorama import Fore, Style, Back
from typing import Any, Dict, List, Optional, Tuple

# Initialize colorama
colorama.init()


class SummaryGenerator:
    """Colored end-of-command summary for prepare / train / evaluate runs"""

    def __init__(self, command: str):
        self.command = command
        self.start_time = time.time()
        self.metrics: Dict[str, Any] = {}
        self.scores: Dict[str, Dict[str, float]] = {}
        self.artifacts: List[str] = []
        self.warnings: List[str] = []
        self.epochs: Optional[Tuple[int, int, bool]] = None

    def add_artifact(self, path: str):
        self.artifacts.append(str(path))

    def add_warning(self, message: str):
        self.warnings.append(message)

    def add_metric(self, name: str, value: Any):
        """Add a custom metric to the summary"""
        self.metrics[name] = value

    def add_scores(self, split: str, headline: Dict[str, float]):
        """Accuracy / weighted P / R / F1 (percent) of one evaluated split"""
        self.scores[split] = headline

    def set_training(self, epochs_run: int, best_epoch: int, stopped_early: bool):
        self.epochs = (epochs_run, best_epoch, stopped_early)

    def generate_summary(self) -> str:
        execution_time = time.time() - self.start_time
        summary = []

        summary.append(f"\n{Back.BLUE}{Fore.WHITE} {self.command.upper()} SUMMARY {Style.RESET_ALL}")
        summary.append(f"\n{Fore.CYAN}{'=' * 60}{Style.RESET_ALL}")
        summary.append(f"{Fore.YELLOW}Execution Time:{Style.RESET_ALL} {execution_time:.2f} seconds")

        if self.epochs is not None:
            epochs_run, best_epoch, stopped_early = self.epochs
            how = "early stop" if stopped_early else "epoch limit"
            summary.append(f"\n{Fore.CYAN}TRAINING{Style.RESET_ALL}")
            summary.append(f"{Fore.YELLOW}Epochs:{Style.RESET_ALL} {epochs_run} ({how})")
            summary.append(f"{Fore.YELLOW}Best Epoch:{Style.RESET_ALL} {best_epoch}")

        if self.scores:
            summary.append(f"\n{Fore.CYAN}SCORES (%){Style.RESET_ALL}")
            for split, headline in self.scores.items():
                f1 = headline.get('f1', 0.0)
                color = Fore.GREEN if f1 >= 80 else (Fore.YELLOW if f1 >= 60 else Fore.RED)
                summary.append(
                    f"{Fore.YELLOW}{split}:{Style.RESET_ALL} acc {headline['accuracy']:.1f}  "
                    f"P {headline['precision']:.1f}  R {headline['recall']:.1f}  "
                    f"F1 {color}{f1:.1f}{Style.RESET_ALL}")

        if self.metrics:
            summary.append(f"\n{Fore.CYAN}DETAILS{Style.RESET_ALL}")
            for name, value in self.metrics.items():
                summary.append(f"{Fore.YELLOW}{name}:{Style.RESET_ALL} {value}")

        if self.artifacts:
            summary.append(f"\n{Fore.CYAN}FILES WRITTEN{Style.RESET_ALL}")
            for i, path in enumerate(self.artifacts[:8], 1):
                summary.append(f"{i}. {Fore.GREEN}{os.path.basename(path)}{Style.RESET_ALL} ({path})")
            if len(self.artifacts) > 8:
                summary.append(f"   {Fore.YELLOW}...and {len(self.artifacts) - 8} more{Style.RESET_ALL}")

        if self.warnings:
            summary.append(f"\n{Fore.CYAN}WARNINGS{Style.RESET_ALL}")
            for message in self.warnings:
                summary.append(f"- {Fore.RED}{message}{Style.RESET_ALL}")

        summary.append(f"\n{Fore.CYAN}{'=' * 60}{Style.RESET_ALL}")
        return "\n".join(summary)

    def print_summary(self):
        """Print the summary to console"""
        print(self.generate_summary())
