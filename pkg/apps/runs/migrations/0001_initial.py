# Generated by Django 4.2.27 on 2026-10-18 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Run',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(db_index=True, max_length=40, verbose_name='Command')),
                ('seed', models.BigIntegerField(default=0, verbose_name='Root seed')),
                ('config_hash', models.CharField(db_index=True, max_length=64, verbose_name='Config hash')),
                ('output_dir', models.CharField(max_length=500, verbose_name='Output directory')),
                ('status', models.CharField(choices=[('running', 'Running'), ('succeeded', 'Succeeded'), ('failed', 'Failed')], db_index=True, default='running', max_length=20, verbose_name='Status')),
                ('message', models.TextField(blank=True, verbose_name='Message')),
                ('started_at', models.DateTimeField(auto_now_add=True, verbose_name='Started')),
                ('finished_at', models.DateTimeField(blank=True, null=True, verbose_name='Finished')),
            ],
            options={
                'verbose_name': 'Run',
                'verbose_name_plural': 'Runs',
                'ordering': ['-started_at'],
            },
        ),
    ]
