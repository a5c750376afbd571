from django.apps import AppConfig


class LdgConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'ldg'
    verbose_name = 'p-Laplace LDG solver'
