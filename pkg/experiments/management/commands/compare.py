"""
Run an experiment matrix (policies x partitions x seeds) and write the
comparison and efficiency tables.

    python manage.py compare --matrix matrix.json --processes 4
"""
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from experiments.comparison import comparison_rows, efficiency_rows, write_comparison, write_efficiency
from experiments.runner import execute_matrix, output_root, read_config_document, resolve_paths
from experiments.serializers import ExperimentMatrixSerializer

from .run import EXIT_IO, EXIT_VALIDATION


class Command(BaseCommand):
    help = "Run every configuration of an experiment matrix and write comparison.csv and efficiency.csv"

    def add_arguments(self, parser):
        parser.add_argument('--matrix', required=True, help="Path to an experiment-matrix JSON file")
        parser.add_argument('--output-root', help="Output root (overrides the matrix 'output')")
        parser.add_argument('--processes', type=int, default=1, help="Parallel run processes")
        parser.add_argument('--workers', type=int, help="Threads for local training inside each run")

    def handle(self, *args, **options):
        try:
            document = read_config_document(options['matrix'])
            document['base'] = resolve_paths(document.get('base') or {})
            serializer = ExperimentMatrixSerializer(data=document)
            serializer.is_valid(raise_exception=True)
            configs = serializer.save()
        except OSError as exc:
            raise CommandError(str(exc), returncode=EXIT_IO)
        except (ValidationError, ValueError) as exc:
            raise CommandError(f"Invalid matrix: {exc}", returncode=EXIT_VALIDATION)

        root = output_root(options['output_root'] or serializer.validated_data.get('output'))
        self.stdout.write(f"Running {len(configs)} configurations into {root}")
        try:
            outcomes = execute_matrix(configs, root=root, processes=options['processes'],
                                      workers=options['workers'])
        except OSError as exc:
            raise CommandError(f"Matrix failed: {exc}", returncode=EXIT_IO)
        except ValueError as exc:
            raise CommandError(f"Matrix failed: {exc}", returncode=EXIT_VALIDATION)

        k = configs[0].evaluation.k
        rows = comparison_rows(outcomes, k)
        path = write_comparison(Path(root) / 'comparison.csv', rows, k)
        self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))

        ratios = efficiency_rows(rows)
        for ratio in ratios:
            value = ratio['Time to Target Ratio']
            shown = f"{value:.3f}" if value is not None else 'target not reached'
            self.stdout.write(f"{ratio['Distribution']} UBI {ratio['UBI']}: {ratio['Method']} / "
                              f"{ratio['Baseline']} time to target {shown}")
        path = write_efficiency(Path(root) / 'efficiency.csv', ratios)
        self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
