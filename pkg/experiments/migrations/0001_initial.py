from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('config_hash', models.CharField(help_text='First 12 hex digits of SHA-256 over the canonical config echo', max_length=12, unique=True)),
                ('name', models.CharField(blank=True, max_length=100)),
                ('policy', models.CharField(max_length=32)),
                ('distribution', models.CharField(max_length=32)),
                ('ubi', models.FloatField()),
                ('seed', models.IntegerField()),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('aborted', 'Aborted'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('output_dir', models.CharField(max_length=500)),
                ('config', models.JSONField(help_text='Verbatim config echo')),
                ('summary', models.JSONField(blank=True, null=True)),
                ('error', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('started_at', models.DateTimeField(blank=True, null=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'db_table': 'experiment_runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
