"""
Run one federated experiment from a JSON config.

    python manage.py run --config base.json --policy ucb --seed 1
"""
from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from experiments.runner import execute_run, load_run_config

EXIT_IO = 2
EXIT_VALIDATION = 3


class Command(BaseCommand):
    help = "Run a federated participant-selection experiment and write its artifacts"

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help="Path to a RunConfig JSON file")
        parser.add_argument('--policy', help="Override policy.kind")
        parser.add_argument('--ubi', type=float, help="Override partition.ubi")
        parser.add_argument('--distribution', choices=('exponential', 'linear'),
                            help="Override partition.strategy")
        parser.add_argument('--seed', type=int, help="Override the run seed")
        parser.add_argument('--rounds', type=int, help="Override the number of rounds")
        parser.add_argument('--k', type=int, help="Override policy.k (clients per round)")
        parser.add_argument('--output-root', help="Output root (default FEDSEL_OUTPUT_ROOT)")
        parser.add_argument('--workers', type=int, help="Threads for local training")

    def handle(self, *args, **options):
        try:
            config = load_run_config(
                options['config'], policy=options['policy'], ubi=options['ubi'], seed=options['seed'],
                rounds=options['rounds'], k=options['k'], distribution=options['distribution'])
        except OSError as exc:
            raise CommandError(str(exc), returncode=EXIT_IO)
        except (ValidationError, ValueError) as exc:
            raise CommandError(f"Invalid config: {exc}", returncode=EXIT_VALIDATION)

        try:
            run, summary, directory = execute_run(config, root=options['output_root'],
                                                  workers=options['workers'])
        except OSError as exc:
            raise CommandError(f"Run failed: {exc}", returncode=EXIT_IO)
        except ValueError as exc:
            raise CommandError(f"Run failed: {exc}", returncode=EXIT_VALIDATION)

        final = summary['final']
        self.stdout.write(self.style.SUCCESS(
            f"Run {run.config_hash} {summary['status']}: {summary['rounds_completed']} rounds, "
            f"simulated time {summary['total_simulated_time']:.3f}s, final AUC {final['auc']}"))
        self.stdout.write(str(directory))
